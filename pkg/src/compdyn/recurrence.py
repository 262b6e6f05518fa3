"""Box-subdivision outer approximation of the Birkhoff center, close returns,
recurrent-time sets and IP sets of return times."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import brentq, minimize, minimize_scalar
from scipy.sparse.csgraph import connected_components

from .flow import _cfg_for, dense_batch, flow_batch, flow_map
from .integrate import COMPLETED, IntegratorConfig
from .scenarios import Scenario

log = logging.getLogger(__name__)

EXIT = -1
T_MIN = 0.1
IP_T_MIN = 1.0


def item_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator per work item, so results do not depend on batching."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])


# ---------------------------------------------------------------------------
# box covers


@dataclass
class BoxCover:
    lo: np.ndarray
    hi: np.ndarray
    depth: int
    active: np.ndarray  # sorted linear indices

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise ValueError("box cover needs lo < hi on every axis")
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        self.active = np.unique(np.asarray(self.active, dtype=np.int64))
        if len(self.active) and (self.active[0] < 0 or self.active[-1] >= self.total):
            raise ValueError("active index out of range for this depth")

    @classmethod
    def full(cls, lo, hi, depth: int) -> "BoxCover":
        n = len(np.atleast_1d(lo))
        return cls(lo, hi, depth, np.arange((2 ** depth) ** n, dtype=np.int64))

    @property
    def dimension(self) -> int:
        return len(self.lo)

    @property
    def per_axis(self) -> int:
        return 2 ** self.depth

    @property
    def total(self) -> int:
        return self.per_axis ** self.dimension

    @property
    def width(self) -> np.ndarray:
        return (self.hi - self.lo) / self.per_axis

    @property
    def radius(self) -> np.ndarray:
        return self.width / 2

    def __len__(self):
        return len(self.active)

    def multi_index(self, idx=None) -> np.ndarray:
        idx = self.active if idx is None else np.asarray(idx, dtype=np.int64)
        return np.stack(np.unravel_index(idx, (self.per_axis,) * self.dimension), axis=-1)

    def linear_index(self, multi) -> np.ndarray:
        multi = np.atleast_2d(multi)
        return np.ravel_multi_index(tuple(multi.T), (self.per_axis,) * self.dimension)

    def centers(self, idx=None) -> np.ndarray:
        return self.lo + (self.multi_index(idx) + 0.5) * self.width

    def locate(self, points) -> np.ndarray:
        """Linear index of the box holding each point, or EXIT outside the domain."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = np.floor((pts - self.lo) / self.width).astype(np.int64)
        # the upper domain face belongs to the last box
        k = np.where(pts == self.hi, self.per_axis - 1, k)
        inside = np.all((k >= 0) & (k < self.per_axis), axis=1)
        out = np.full(len(pts), EXIT, dtype=np.int64)
        if inside.any():
            out[inside] = self.linear_index(k[inside])
        return out

    def contains(self, points, closed: bool = True) -> np.ndarray:
        """True where a point lies in some active box (closed boxes by default)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not closed:
            return np.isin(self.locate(pts), self.active)
        # a point on a shared face belongs to every adjacent box
        w = self.width
        rel = (pts - self.lo) / w
        base = np.floor(rel).astype(np.int64)
        on_face = np.isclose(rel, np.round(rel), rtol=0, atol=1e-9)
        hit = np.zeros(len(pts), dtype=bool)
        for shift in itertools.product((0, -1), repeat=self.dimension):
            s = np.array(shift)
            k = base + s * on_face
            ok = np.all((k >= 0) & (k < self.per_axis), axis=1)
            if ok.any():
                lin = self.linear_index(k[ok])
                hit[np.flatnonzero(ok)] |= np.isin(lin, self.active)
        return hit

    def subdivide(self, levels: int = 1) -> "BoxCover":
        if levels < 0:
            raise ValueError("cannot subdivide by a negative number of levels")
        if levels == 0 or len(self.active) == 0:
            return BoxCover(self.lo, self.hi, self.depth + levels, self.active[:0])
        f = 2 ** levels
        base = self.multi_index() * f
        offsets = np.array(list(itertools.product(range(f), repeat=self.dimension)))
        kids = (base[:, None, :] + offsets[None, :, :]).reshape(-1, self.dimension)
        finer = BoxCover(self.lo, self.hi, self.depth + levels, np.zeros(0, dtype=np.int64))
        finer.active = np.unique(finer.linear_index(kids))
        return finer

    def coarsen(self, depth: int) -> "BoxCover":
        if depth > self.depth:
            raise ValueError("coarsen target must not be finer than the cover")
        f = 2 ** (self.depth - depth)
        coarse = BoxCover(self.lo, self.hi, depth, np.zeros(0, dtype=np.int64))
        if len(self.active):
            coarse.active = np.unique(coarse.linear_index(self.multi_index() // f))
        return coarse

    def with_active(self, active) -> "BoxCover":
        return BoxCover(self.lo, self.hi, self.depth, active)

    def diameter(self, norm: str = "sup") -> float:
        """Extent of the hull of the active boxes (sup norm by default)."""
        if len(self.active) == 0:
            return 0.0
        k = self.multi_index()
        ext = (k.max(axis=0) - k.min(axis=0) + 1) * self.width
        return float(ext.max() if norm == "sup" else np.linalg.norm(ext))

    def to_csv(self, path, flags=None) -> None:
        n = self.dimension
        cols = ["depth", "index"] + [f"cx{i + 1}" for i in range(n)] + \
               [f"r{i + 1}" for i in range(n)] + ["flags"]
        c = self.centers()
        r = self.radius
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for j, idx in enumerate(self.active):
                flag = "active" if flags is None else str(flags[j])
                vals = [repr(float(v)) for v in (*c[j], *r)]
                fh.write(f"{self.depth},{int(idx)}," + ",".join(vals) + f",{flag}\n")


# ---------------------------------------------------------------------------
# transition graph


@dataclass
class TransitionGraph:
    cover: BoxCover
    T: float
    samples_per_box: int
    padding: np.ndarray  # per active box
    matrix: sparse.csr_matrix  # active x active adjacency
    exits: np.ndarray  # bool per active box: some image left the domain

    def successors(self, i: int) -> np.ndarray:
        row = self.matrix.indices[self.matrix.indptr[i]:self.matrix.indptr[i + 1]]
        return self.cover.active[np.sort(row)]

    @property
    def adjacency(self) -> dict:
        out = {}
        for i, src in enumerate(self.cover.active):
            succ = list(map(int, self.successors(i)))
            if self.exits[i]:
                succ.append(EXIT)
            out[int(src)] = succ
        return out

    @property
    def edge_count(self) -> int:
        return int(self.matrix.nnz + self.exits.sum())

    def write_edges(self, path) -> None:
        with open(path, "w") as fh:
            for src, succ in self.adjacency.items():
                for dst in succ:
                    fh.write(f"{src} {'EXIT' if dst == EXIT else dst}\n")


def box_samples(cover: BoxCover, samples_per_box: int, seed: int):
    """Corners, center and seeded interior points of every active box.

    Returns ``(points, owner)`` where ``owner[j]`` is the position of the box in
    ``cover.active``.
    """
    n = cover.dimension
    m = len(cover.active)
    corners = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    unit = [np.concatenate([corners, np.zeros((1, n))])]
    per = len(unit[0]) + samples_per_box
    local = np.empty((m, per, n))
    local[:, : len(unit[0])] = unit[0]
    if samples_per_box:
        for j, idx in enumerate(cover.active):
            local[j, len(unit[0]):] = item_rng(seed, idx).uniform(-1, 1, (samples_per_box, n))
    pts = cover.centers()[:, None, :] + local * cover.radius
    owner = np.repeat(np.arange(m), per)
    return pts.reshape(-1, n), owner


def _secant_lipschitz(src: np.ndarray, img: np.ndarray) -> float:
    d_src = np.linalg.norm(src[:, None] - src[None], axis=2)
    d_img = np.linalg.norm(img[:, None] - img[None], axis=2)
    mask = d_src > 0
    return float((d_img[mask] / d_src[mask]).max()) if mask.any() else 0.0


def box_map(cover: BoxCover, scenario: Scenario, T: float = 1.0, samples_per_box: int = 4,
            padding=None, seed: int = 0, cfg: Optional[IntegratorConfig] = None,
            chunk: int = 200_000) -> TransitionGraph:
    """Sampled time-T transition digraph on the active boxes.

    ``padding=None`` uses, per box, the secant Lipschitz estimate of the time-T
    map over the box samples times the box's sup-norm radius.  A number is used
    as a fixed padding for every box.
    """
    if T <= 0:
        raise ValueError("map time T must be positive")
    m = len(cover.active)
    n = cover.dimension
    if m == 0:
        return TransitionGraph(cover, T, samples_per_box, np.zeros(0),
                               sparse.csr_matrix((0, 0)), np.zeros(0, dtype=bool))
    pts, owner = box_samples(cover, samples_per_box, seed)
    per = len(pts) // m
    images = np.empty_like(pts)
    ok = np.empty(len(pts), dtype=bool)
    for s in range(0, len(pts), chunk):
        st, code, _ = flow_batch(scenario, pts[s:s + chunk], T, cfg)
        images[s:s + chunk] = st
        ok[s:s + chunk] = code == COMPLETED
    rmax = float(cover.radius.max())
    if padding is None:
        pad_box = np.empty(m)
        P = pts.reshape(m, per, n)
        I = images.reshape(m, per, n)
        O = ok.reshape(m, per)
        for j in range(m):
            pad_box[j] = _secant_lipschitz(P[j][O[j]], I[j][O[j]]) * rmax if O[j].sum() > 1 else rmax
    else:
        pad_box = np.full(m, float(padding))
    pad = pad_box[owner]

    exits = np.zeros(m, dtype=bool)
    exits[owner[~ok]] = True
    good = ok & np.all(np.isfinite(images), axis=1)
    y, pad, own = images[good], pad[good], owner[good]
    w = cover.width
    N = cover.per_axis
    kl = np.floor((y - pad[:, None] - cover.lo) / w).astype(np.int64)
    kh = np.floor((y + pad[:, None] - cover.lo) / w).astype(np.int64)
    leaves = np.any((kl < 0) | (kh >= N), axis=1)
    exits[own[leaves]] = True
    kl = np.clip(kl, 0, N - 1)
    kh = np.clip(kh, 0, N - 1)
    # cubes entirely outside the domain touch no box
    outside = np.any((y + pad[:, None] < cover.lo) | (y - pad[:, None] > cover.hi), axis=1)
    kl, kh, own = kl[~outside], kh[~outside], own[~outside]
    span = int((kh - kl).max()) + 1 if len(kl) else 1
    offs = np.array(list(itertools.product(range(span), repeat=n)), dtype=np.int64)
    rows, cols = [], []
    step = max(1, chunk // max(1, len(offs)))
    for s in range(0, len(kl), step):
        a, b, o = kl[s:s + step], kh[s:s + step], own[s:s + step]
        cand = a[:, None, :] + offs[None, :, :]
        valid = np.all(cand <= b[:, None, :], axis=2)
        src = np.broadcast_to(o[:, None], valid.shape)[valid]
        tgt = cover.linear_index(cand[valid])
        pos = np.searchsorted(cover.active, tgt)
        pos = np.minimum(pos, m - 1)
        hit = cover.active[pos] == tgt
        rows.append(src[hit])
        cols.append(pos[hit])
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    mat = sparse.csr_matrix((np.ones(len(r), dtype=np.int8), (r, c)), shape=(m, m))
    mat.sum_duplicates()
    mat.data[:] = 1
    return TransitionGraph(cover, T, samples_per_box, pad_box, mat, exits)


def chain_recurrent(graph: TransitionGraph) -> np.ndarray:
    """Boxes in strongly connected components with a cycle (size >= 2 or a self-loop)."""
    m = len(graph.cover.active)
    if m == 0:
        return np.zeros(0, dtype=np.int64)
    ncomp, labels = connected_components(graph.matrix, directed=True, connection="strong")
    sizes = np.bincount(labels, minlength=ncomp)
    self_loop = graph.matrix.diagonal() > 0
    keep = (sizes[labels] >= 2) | self_loop
    return graph.cover.active[keep]


@dataclass
class SubdivisionResult:
    cover: BoxCover
    history: List[Tuple[int, int, int]]  # (depth, boxes mapped, survivors)
    graph: Optional[TransitionGraph] = None

    @property
    def empty(self) -> bool:
        return len(self.cover.active) == 0


def subdivide_iterate(scenario: Scenario, lo=None, hi=None, depth_schedule: Sequence[int] = (2, 4, 6),
                      T: float = 1.0, samples_per_box: int = 4, padding=None, seed: int = 0,
                      cfg: Optional[IntegratorConfig] = None, initial_active=None) -> SubdivisionResult:
    """Alternate subdivision and chain-recurrent pruning along the depth schedule."""
    lo = scenario.domain_lo if lo is None else np.asarray(lo, float)
    hi = scenario.domain_hi if hi is None else np.asarray(hi, float)
    depths = list(depth_schedule)
    if not depths or any(b <= a for a, b in zip(depths, depths[1:])):
        raise ValueError("depth schedule must be nonempty and strictly increasing")
    if initial_active is None:
        cover = BoxCover.full(lo, hi, depths[0])
    else:
        cover = BoxCover(lo, hi, depths[0], initial_active)
    history = []
    graph = None
    for k, d in enumerate(depths):
        if k > 0:
            cover = cover.subdivide(d - cover.depth)
        if len(cover.active) == 0:
            history.append((d, 0, 0))
            log.warning("no surviving boxes at depth %d", d)
            break
        graph = box_map(cover, scenario, T, samples_per_box, padding, seed, cfg)
        survivors = chain_recurrent(graph)
        history.append((d, len(cover.active), len(survivors)))
        log.info("depth %d: %d boxes -> %d chain recurrent", d, len(cover.active), len(survivors))
        cover = cover.with_active(survivors)
    final_depth = depths[-1]
    if cover.depth != final_depth:
        cover = BoxCover(lo, hi, final_depth, np.zeros(0, dtype=np.int64))
    return SubdivisionResult(cover, history, graph)


# ---------------------------------------------------------------------------
# components


@dataclass
class ComponentRecord:
    boxes: np.ndarray
    representatives: np.ndarray
    resolution: float  # sup-norm box width
    certified: list = field(default_factory=list)
    verdict: object = None
    lower_target: object = None
    upper_target: object = None
    b_evidence: object = None
    label: int = 0

    @property
    def size(self) -> int:
        return len(self.boxes)

    def contains_point(self, cover: BoxCover, x) -> bool:
        return bool(cover.with_active(self.boxes).contains(np.atleast_2d(x))[0])


def spatial_components(cover: BoxCover) -> List[ComponentRecord]:
    """Face-adjacent clusters of active boxes, ordered by smallest member index."""
    m = len(cover.active)
    if m == 0:
        return []
    k = cover.multi_index()
    rows, cols = [], []
    for axis in range(cover.dimension):
        nb = k.copy()
        nb[:, axis] += 1
        ok = nb[:, axis] < cover.per_axis
        lin = cover.linear_index(nb[ok]) if ok.any() else np.zeros(0, dtype=np.int64)
        pos = np.minimum(np.searchsorted(cover.active, lin), m - 1)
        hit = cover.active[pos] == lin
        rows.append(np.flatnonzero(ok)[hit])
        cols.append(pos[hit])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    g = sparse.csr_matrix((np.ones(len(r)), (r, c)), shape=(m, m))
    _, labels = connected_components(g, directed=False)
    out = []
    centers = cover.centers()
    order = {}
    for j, lab in enumerate(labels):
        order.setdefault(lab, j)
    for new_label, lab in enumerate(sorted(order, key=order.get)):
        sel = labels == lab
        out.append(ComponentRecord(cover.active[sel], centers[sel], float(cover.width.max()),
                                   label=new_label))
    return out


# ---------------------------------------------------------------------------
# close returns


@dataclass
class CloseReturn:
    z: np.ndarray
    t: float
    error: float


def _return_distance(scenario, x0, horizon, cfg):
    r = dense_batch(scenario, x0, horizon, cfg)
    return r, (lambda t: np.linalg.norm(r.dense(t)[:, 0, :] - x0, axis=1))


def refine_close_return(scenario: Scenario, x0, t_window: Tuple[float, float], theta: float,
                        cfg: Optional[IntegratorConfig] = None, dt: Optional[float] = None,
                        t_min: float = T_MIN, polish: bool = True) -> Optional[CloseReturn]:
    """Best close return of ``x0`` (or of a point within ``theta`` of it) in ``t_window``."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    x0 = np.asarray(x0, dtype=float)
    t_lo, t_hi = max(float(t_window[0]), t_min), float(t_window[1])
    if t_hi <= t_lo:
        raise ValueError("t_window must extend beyond t_min")
    cfg = _cfg_for(scenario, cfg)
    r, dist = _return_distance(scenario, x0, t_hi, cfg)
    if r.status[0] != COMPLETED:
        return None
    dt = dt or (t_hi - t_lo) / 2000
    ts = np.arange(t_lo, t_hi + 0.5 * dt, dt)
    ts = ts[ts <= t_hi]
    d = dist(ts)
    if d.min() <= 1e-13:
        j = int(np.argmin(d))
        return CloseReturn(x0.copy(), float(ts[j]), float(d[j]))
    # interior local minima only: a minimum at the window edge is a slow drift, not a return
    cand = np.flatnonzero((d[1:-1] <= d[:-2]) & (d[1:-1] <= d[2:])) + 1
    cand = cand[np.argsort(d[cand])][:5]
    best = None
    for j in cand:
        a, b = ts[max(j - 1, 0)], ts[min(j + 1, len(ts) - 1)]
        res = minimize_scalar(lambda t: float(dist([t])[0]), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-10})
        t_star, e_star = float(res.x), float(res.fun)
        if best is None or e_star < best.error:
            best = CloseReturn(x0.copy(), t_star, e_star)
    if polish and best is not None and best.error > 1e-10:
        scale = max(theta, 1e-8)

        def objective(u):
            t = best.t + u[0]
            x = x0 + scale * u[1:]
            if t < t_lo or np.linalg.norm(u[1:]) > 1.0:
                return 1e3
            fr = flow_map(scenario, x, t, cfg)
            return float(np.linalg.norm(fr.point - x)) if fr.ok else 1e3

        u0 = np.zeros(len(x0) + 1)
        res = minimize(objective, u0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxfev": 400})
        if res.fun < best.error:
            x = x0 + scale * res.x[1:]
            best = CloseReturn(x, best.t + float(res.x[0]), float(res.fun))
    if best is None or best.error >= theta:
        return None
    # re-measure directly so the reported error is not an interpolation artifact
    fr = flow_map(scenario, best.z, best.t, cfg)
    err = float(np.linalg.norm(fr.point - best.z))
    return CloseReturn(best.z, best.t, err) if fr.ok and err < theta else None


# ---------------------------------------------------------------------------
# recurrent-time sets


@dataclass
class RecurrentTimeSet:
    z: np.ndarray
    theta: float
    intervals: np.ndarray  # (k, 2), disjoint and increasing
    horizon: float
    truncated: bool = False
    _dist: object = field(default=None, repr=False)

    def contains(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if len(self.intervals) == 0:
            return np.zeros(len(t), dtype=bool)
        j = np.searchsorted(self.intervals[:, 0], t, side="right") - 1
        ok = j >= 0
        jj = np.clip(j, 0, None)
        return ok & (t > self.intervals[jj, 0]) & (t < self.intervals[jj, 1]) | \
            (ok & (t == self.intervals[jj, 1]) & (self.intervals[jj, 1] == self.horizon))

    def distance(self, t) -> np.ndarray:
        return self._dist(np.atleast_1d(np.asarray(t, dtype=float)))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t_lo,t_hi\n")
            for a, b in self.intervals:
                fh.write(f"{a!r},{b!r}\n")


def recurrent_times(scenario: Scenario, z, theta: float, horizon: float, dt: float = 0.05,
                    cfg: Optional[IntegratorConfig] = None) -> RecurrentTimeSet:
    """Intervals in (0, horizon] where the orbit of z is within theta of z."""
    if theta <= 0 or horizon <= 0 or dt <= 0:
        raise ValueError("theta, horizon and dt must be positive")
    z = np.asarray(z, dtype=float)
    cfg = _cfg_for(scenario, cfg)
    r, dist = _return_distance(scenario, z, horizon, cfg)
    reach = float(r.stop_time[0])
    truncated = r.status[0] != COMPLETED
    if truncated:
        log.warning("orbit stopped at t=%.4g before horizon %.4g", reach, horizon)
    end = reach if truncated else horizon
    ts = np.arange(0.0, end + 0.5 * dt, dt)
    ts[-1] = min(ts[-1], end)
    ts = np.unique(np.clip(ts, 0.0, end))
    d = dist(ts)
    inside = d < theta
    inside[0] = True  # t -> 0+ is always within theta
    tol = dt / 100

    def edge(a, b):
        g = lambda t: float(dist([t])[0]) - theta  # noqa: E731
        ga, gb = g(a), g(b)
        if ga * gb > 0:
            return 0.5 * (a + b)
        return brentq(g, a, b, xtol=tol)

    intervals = []
    k = 0
    while k < len(ts):
        if not inside[k]:
            k += 1
            continue
        start = k
        while k + 1 < len(ts) and inside[k + 1]:
            k += 1
        lo_t = 0.0 if start == 0 else edge(ts[start - 1], ts[start])
        hi_t = end if k == len(ts) - 1 else edge(ts[k], ts[k + 1])
        if hi_t > lo_t:
            intervals.append((lo_t, hi_t))
        k += 1
    iv = np.array(intervals, dtype=float).reshape(-1, 2)
    return RecurrentTimeSet(z, float(theta), iv, float(end), bool(truncated), dist)


# ---------------------------------------------------------------------------
# Proposition A.1 search


@dataclass
class A1Witness:
    found: bool
    n: int = 0
    s: float = float("nan")  # the return time n*tau + offset
    offset: float = float("nan")
    error: float = float("nan")

    @property
    def label(self) -> str:
        return "Witness" if self.found else "NotFoundWithinHorizon"


def verify_A1(scenario: Scenario, z, theta: float, tau: float, eps: float, horizon: float,
              cfg: Optional[IntegratorConfig] = None, rts: Optional[RecurrentTimeSet] = None,
              dt: Optional[float] = None) -> A1Witness:
    """First n with (n tau - eps, n tau + eps) meeting the recurrent-time set."""
    if min(theta, tau, eps, horizon) <= 0:
        raise ValueError("theta, tau, eps and horizon must be positive")
    if eps >= tau / 2:
        raise ValueError("need eps < tau / 2")
    z = np.asarray(z, dtype=float)
    cfg = _cfg_for(scenario, cfg)
    if rts is None or rts.theta != theta or rts.horizon < horizon - 1e-12:
        rts = recurrent_times(scenario, z, theta, horizon, dt or min(0.05, eps / 2), cfg)
    iv = rts.intervals
    n_max = int(np.floor(min(horizon, rts.horizon) / tau))
    if n_max < 1 or len(iv) == 0:
        return A1Witness(False)
    n = np.arange(1, n_max + 1)
    c = n * tau
    a, b = c - eps, c + eps
    # first interval whose right end exceeds the window's left end
    j = np.searchsorted(iv[:, 1], a, side="right")
    j = np.minimum(j, len(iv) - 1)
    overlap = (iv[j, 0] < b) & (iv[j, 1] > a)
    for k in np.flatnonzero(overlap):
        lo_t, hi_t = max(a[k], iv[j[k], 0]), min(b[k], iv[j[k], 1])
        candidates = [min(max(c[k], lo_t), hi_t), 0.5 * (lo_t + hi_t)]
        for s in candidates:
            if s <= 0 or abs(s - c[k]) >= eps:
                continue
            fr = flow_map(scenario, z, s, cfg)
            err = float(np.linalg.norm(fr.point - z))
            if fr.ok and err < theta:
                return A1Witness(True, int(n[k]), float(s), float(s - c[k]), err)
    return A1Witness(False)


# ---------------------------------------------------------------------------
# IP sets


@dataclass
class IPVerdict:
    passed: bool
    worst_error: float
    worst_sum: float
    worst_subset: Tuple[int, ...]
    escaped: bool = False


@dataclass
class IPSet:
    z: np.ndarray
    theta: float
    generators: List[float]
    moduli: List[float]
    worst_error: float = float("nan")
    truncated: bool = False
    requested: int = 0

    def report(self) -> str:
        lines = [f"theta {self.theta!r}", f"requested {self.requested}",
                 f"generators {len(self.generators)}", f"truncated {self.truncated}"]
        for i, (p, m) in enumerate(zip(self.generators, self.moduli), 1):
            lines.append(f"p{i} {p!r} modulus {m!r}")
        lines.append(f"worst_subset_sum_error {self.worst_error!r}")
        return "\n".join(lines) + "\n"


def subset_sums(generators: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """All nonempty subset sums with their bit masks (bit i = generator i)."""
    g = np.asarray(generators, dtype=float)
    k = len(g)
    masks = np.arange(1, 2 ** k, dtype=np.int64)
    bits = (masks[:, None] >> np.arange(k)) & 1
    return bits @ g, masks


def _orbit_errors(scenario, z, times, cfg):
    """Return distances of z at many times from one dense trajectory."""
    horizon = float(np.max(times))
    r = dense_batch(scenario, z, horizon, cfg)
    if r.status[0] != COMPLETED:
        reach = float(r.stop_time[0])
        err = np.full(len(times), np.inf)
        ok = times <= reach
        if ok.any():
            err[ok] = np.linalg.norm(r.dense(times[ok])[:, 0, :] - z, axis=1)
        return err, True
    return np.linalg.norm(r.dense(times)[:, 0, :] - z, axis=1), False


def ip_verify(scenario: Scenario, z, theta: float, generators: Sequence[float],
              cfg: Optional[IntegratorConfig] = None, chunk: int = 1 << 16) -> IPVerdict:
    """Worst return distance of z over every nonempty subset sum of the generators."""
    g = list(map(float, generators))
    if not g:
        raise ValueError("need at least one generator")
    if len(g) > 20:
        raise ValueError("at most 20 generators can be enumerated")
    z = np.asarray(z, dtype=float)
    cfg = _cfg_for(scenario, cfg)
    sums, masks = subset_sums(g)
    errs = np.empty(len(sums))
    escaped = False
    for s in range(0, len(sums), chunk):
        e, esc = _orbit_errors(scenario, z, sums[s:s + chunk], cfg)
        errs[s:s + chunk] = e
        escaped |= esc
    j = int(np.argmax(errs))
    # re-check the worst sum with a direct integration
    fr = flow_map(scenario, z, float(sums[j]), cfg)
    direct = float(np.linalg.norm(fr.point - z)) if fr.ok else np.inf
    worst = max(float(errs[j]), direct)
    subset = tuple(i for i in range(len(g)) if (masks[j] >> i) & 1)
    return IPVerdict(worst < theta and not escaped, worst, float(sums[j]), subset, escaped)


def _modulus(scenario, z, theta, sums, start, cfg, seed, floor=1e-12, probes=16):
    """Largest tried radius rho (halving from ``start``) whose sampled perturbations
    y of z keep |flow(y, s) - z| < theta for every s in ``sums``."""
    n = len(z)
    rng = item_rng(seed, len(sums))
    dirs = np.concatenate([np.eye(n), -np.eye(n), rng.normal(size=(probes, n))])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    horizon = float(np.max(sums)) if len(sums) else 0.0
    rho = start
    while rho >= floor:
        ys = z + np.concatenate([rho * dirs, 0.5 * rho * dirs])
        if horizon == 0.0:
            worst = float(np.linalg.norm(ys - z, axis=1).max())
        else:
            r = dense_batch(scenario, ys, horizon, cfg)
            if np.any(r.status != COMPLETED):
                rho *= 0.5
                continue
            traj = r.dense(np.asarray(sums))
            worst = float(np.linalg.norm(traj - z, axis=2).max())
            worst = max(worst, float(np.linalg.norm(ys - z, axis=1).max()))
        if worst < theta:
            return rho
        rho *= 0.5
    return 0.0


def _next_return(rts: RecurrentTimeSet, t_min: float):
    """Earliest genuine return: argmin of the distance in the first sub-threshold
    interval that starts after t_min (the orbit must leave the ball first)."""
    iv = rts.intervals
    if len(iv) == 1 and iv[0, 0] == 0.0 and iv[0, 1] >= rts.horizon:
        return t_min  # never leaves the ball, e.g. an equilibrium
    for a, b in iv:
        if a <= t_min:
            continue
        res = minimize_scalar(lambda t: float(rts.distance(t)[0]), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-10})
        return float(res.x)
    return None


def ip_generate(scenario: Scenario, z, theta: float, k: int, horizon: float,
                cfg: Optional[IntegratorConfig] = None, t_min: float = IP_T_MIN,
                seed: int = 0, dt: float = 0.02) -> IPSet:
    """Generators p_1..p_k whose finite subset sums all return within theta of z.

    Each new generator is a return time of z within the current modulus; the next
    modulus is the largest sampled perturbation radius that keeps every sum
    certified so far (and 0) within theta.  The result is verified exhaustively.
    """
    if not 1 <= k <= 12:
        raise ValueError("k must lie in 1..12")
    if theta <= 0 or horizon <= t_min:
        raise ValueError("theta must be positive and horizon must exceed t_min")
    z = np.asarray(z, dtype=float)
    cfg = _cfg_for(scenario, cfg)
    gens: List[float] = []
    moduli: List[float] = []
    sums = np.array([0.0])
    modulus = theta
    truncated = False
    for m in range(k):
        modulus = _modulus(scenario, z, theta, sums, modulus, cfg, seed)
        if modulus < 1e-12:
            truncated = True
            log.warning("modulus underflow after %d generators", m)
            break
        rts = recurrent_times(scenario, z, modulus, horizon, dt, cfg)
        p = _next_return(rts, t_min)
        if p is None:
            truncated = True
            log.warning("no return within modulus %.3g before horizon %.3g", modulus, horizon)
            break
        err = float(np.linalg.norm(flow_map(scenario, z, p, cfg).point - z))
        if err >= modulus:
            truncated = True
            break
        gens.append(p)
        moduli.append(modulus)
        sums = np.concatenate([sums, sums + p])
    ip = IPSet(z, float(theta), gens, moduli, truncated=truncated, requested=k)
    if gens:
        ip.worst_error = ip_verify(scenario, z, theta, gens, cfg).worst_error
    return ip
