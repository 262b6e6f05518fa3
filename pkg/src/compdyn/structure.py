"""Order-structure audits of recurrent components, repulsion basins and the
invariant unordered cells bounding them."""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .flow import (AlphaContext, AlphaKind, AlphaResult, alpha_limit_batch, dense_batch,
                   flow_batch, flow_map, trajectory)
from .integrate import COMPLETED, IntegratorConfig
from .order import (ConeSpec, inf_points, is_unordered_set, order_parameterize,
                    region_margins, sup_points)
from .recurrence import (T_MIN, BoxCover, CloseReturn, ComponentRecord, item_rng,
                         refine_close_return)
from .scenarios import Scenario

log = logging.getLogger(__name__)

PLUS_INF = "+inf"
MINUS_INF = "-inf"


def _pair_tags(cone: ConeSpec, a: np.ndarray, b: np.ndarray):
    """Tags and margins of every b_j - a_i, flattened with the index pairs."""
    d = (b[None, :, :] - a[:, None, :]).reshape(-1, a.shape[1])
    tags, margins = region_margins(cone, d)
    i, j = np.divmod(np.arange(len(d)), len(b))
    return tags, margins, i, j


# ---------------------------------------------------------------------------
# dichotomy


class VerdictTag(enum.Enum):
    UNORDERED = "Unordered"
    STRONGLY_ORDERED_EQUILIBRIA = "StronglyOrderedEquilibria"
    SINGLETON_TRIVIAL = "SingletonTrivial"
    VIOLATION = "Violation"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class DichotomyVerdict:
    tag: VerdictTag
    margin: float = float("nan")
    projections: Optional[np.ndarray] = None
    witness: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __str__(self):
        return f"{self.tag.value}(margin={self.margin:.6g})"


def classify_component(cone: ConeSpec, points, equilibria=None, margin: float = 0.0,
                       resolution: float = 0.0, eq_tol: Optional[float] = None) -> DichotomyVerdict:
    """Unordered / strongly ordered equilibria / singleton, or a violation witness.

    Pairs closer than ``resolution`` are not compared.  ``margin`` is the
    minimum region margin for a pair to count as clearly ordered or unordered.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        raise ValueError("component needs at least one representative")
    eta = max(margin, cone.strict_margin)
    i, j = np.triu_indices(len(pts), k=1)
    d = pts[j] - pts[i]
    far = np.linalg.norm(d, axis=1) > resolution
    if not far.any():
        return DichotomyVerdict(VerdictTag.SINGLETON_TRIVIAL, 0.0)
    i, j, d = i[far], j[far], d[far]
    tags, margins = region_margins(cone, d)
    clear = margins > eta
    unordered = (tags == 2) & clear
    ordered = ((tags == 1) | (tags == -1)) & clear
    if unordered.all():
        return DichotomyVerdict(VerdictTag.UNORDERED, float(margins.min()))
    eq = np.zeros((0, pts.shape[1])) if equilibria is None else np.atleast_2d(equilibria)
    tol = resolution if eq_tol is None else eq_tol
    if ordered.all():
        if len(eq):
            dist = np.linalg.norm(pts[:, None, :] - eq[None, :, :], axis=2).min(axis=1)
        else:
            dist = np.full(len(pts), np.inf)
        off = dist > max(tol, 1e-9)
        if off.any():
            k = int(np.argmax(off))
            partner = j[i == k][0] if np.any(i == k) else i[j == k][0]
            return DichotomyVerdict(VerdictTag.VIOLATION, float(margins.min()),
                                    witness=(pts[k].copy(), pts[partner].copy()))
        chain = order_parameterize(cone, _cluster_means(pts, resolution))
        return DichotomyVerdict(VerdictTag.STRONGLY_ORDERED_EQUILIBRIA, float(margins.min()),
                                projections=chain.projections)
    if ordered.any() and unordered.any():
        k = int(np.argmax(ordered))
        return DichotomyVerdict(VerdictTag.VIOLATION, float(margins[k]),
                                witness=(pts[i[k]].copy(), pts[j[k]].copy()))
    k = int(np.argmin(np.where(clear, np.inf, margins)))
    return DichotomyVerdict(VerdictTag.INCONCLUSIVE, float(margins[k]),
                            witness=(pts[i[k]].copy(), pts[j[k]].copy()))


def _cluster_means(pts: np.ndarray, resolution: float) -> np.ndarray:
    """Greedy merge of points closer than ``resolution``; one mean per cluster."""
    left = list(range(len(pts)))
    out = []
    while left:
        k = left[0]
        near = [q for q in left if np.linalg.norm(pts[q] - pts[k]) <= resolution]
        out.append(pts[near].mean(axis=0))
        left = [q for q in left if q not in near]
    return np.array(out)


# ---------------------------------------------------------------------------
# component certification


def orbit_samples(scenario: Scenario, cr: CloseReturn, count: int = 100,
                  cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """Points along one return of a certified point (the point itself if stationary)."""
    if cr.error < 1e-12 and np.linalg.norm(scenario(cr.z)) < 1e-9:
        return cr.z[None, :].copy()
    tr = trajectory(scenario, cr.z, cr.t, cfg)
    ts = np.linspace(0.0, cr.t, count, endpoint=False)
    return tr(ts)


def certify_component(scenario: Scenario, comp: ComponentRecord, cover: BoxCover,
                      equilibria=None, theta: Optional[float] = None, settle: float = 1000.0,
                      window: Tuple[float, float] = (T_MIN, 40.0), probes: int = 4,
                      cfg: Optional[IntegratorConfig] = None) -> List[CloseReturn]:
    """Close-return witnesses inside a component.

    Equilibria lying in the component's boxes are certified directly.  Otherwise
    a few representatives are pushed forward for ``settle`` time; when the
    settled point is still in the component, its best close return is refined.
    """
    member = cover.with_active(comp.boxes)
    out: List[CloseReturn] = []
    if equilibria is not None and len(equilibria):
        eq = np.atleast_2d(equilibria)
        for p in eq[member.contains(eq)]:
            out.append(CloseReturn(p.copy(), T_MIN, float(np.linalg.norm(
                flow_map(scenario, p, T_MIN, cfg).point - p))))
    theta = theta if theta is not None else comp.resolution
    reps = comp.representatives
    pick = np.unique(np.linspace(0, len(reps) - 1, min(probes, len(reps))).astype(int))
    settled, status, _ = flow_batch(scenario, reps[pick], settle, cfg)
    for x, st in zip(settled, status):
        if st != COMPLETED or not member.contains(x[None, :])[0]:
            continue
        if any(np.linalg.norm(x - c.z) < 1e-9 for c in out):
            continue
        cr = refine_close_return(scenario, x, window, theta, cfg)
        if cr is not None and member.contains(cr.z[None, :])[0]:
            if np.linalg.norm(scenario(cr.z)) < 1e-9 and any(
                    np.linalg.norm(cr.z - c.z) < comp.resolution for c in out):
                continue  # same equilibrium reached again
            out.append(cr)
    return out


def component_points(scenario: Scenario, certified: Sequence[CloseReturn], count: int = 100,
                     cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    return np.concatenate([orbit_samples(scenario, c, count, cfg) for c in certified])


# ---------------------------------------------------------------------------
# intersection principle and related audits


@dataclass
class Flag:
    kind: str
    x: np.ndarray
    other: np.ndarray
    margin: float
    tag: int

    def line(self) -> str:
        xs = " ".join(f"{v:.9g}" for v in self.x)
        os_ = " ".join(f"{v:.9g}" for v in self.other)
        return f"kind={self.kind} x=[{xs}] other=[{os_}] tag={self.tag} margin={self.margin:.6g}"


@dataclass
class IntersectionReport:
    pair_flags: List[Flag]
    box_flags: List[Flag]
    min_pair_margin: float
    pairs_checked: int
    boxes_checked: int

    @property
    def clean(self) -> bool:
        return not self.pair_flags and not self.box_flags


def intersection_principle_audit(cone: ConeSpec, certified, cover: Optional[BoxCover] = None,
                                 shell: float = 0.01, exclude=None,
                                 resolution: float = 0.0) -> IntersectionReport:
    """Certified points must meet each other's joint cone-boundary only at themselves.

    Pair layer: every other certified point relative to x is in Int C or Int K
    with margin >= shell.  Box layer: surviving boxes (outside x's own
    component, given by ``exclude[k]`` as a box-index array) whose center lies
    within ``shell`` of the joint boundary at x are flagged.
    """
    pts = np.atleast_2d(np.asarray([getattr(c, "z", c) for c in certified], dtype=float))
    pair_flags: List[Flag] = []
    box_flags: List[Flag] = []
    min_margin = np.inf
    checked = 0
    for a in range(len(pts)):
        for b in range(len(pts)):
            if a == b or np.linalg.norm(pts[b] - pts[a]) <= resolution:
                continue
            tags, margins = region_margins(cone, (pts[b] - pts[a])[None, :])
            checked += 1
            if b > a:
                min_margin = min(min_margin, float(margins[0]))
            if tags[0] in (0, 3) or margins[0] < shell:
                pair_flags.append(Flag("pair", pts[a], pts[b], float(margins[0]), int(tags[0])))
    nbox = 0
    if cover is not None and len(cover.active):
        centers = cover.centers()
        for a, x in enumerate(pts):
            mask = np.any(np.abs(centers - x) > cover.radius + 1e-12, axis=1)
            if exclude is not None:
                mask &= ~np.isin(cover.active, exclude[a])
            tags, margins = region_margins(cone, centers[mask] - x)
            nbox += int(mask.sum())
            near = (tags == 3) | (tags == 0) | (margins < shell)
            for c, t, mg in zip(centers[mask][near], tags[near], margins[near]):
                box_flags.append(Flag("box", x, c, float(mg), int(t)))
    return IntersectionReport(pair_flags, box_flags,
                              float(min_margin) if np.isfinite(min_margin) else float("inf"),
                              checked, nbox)


def _tail(scenario: Scenario, x, T: float, count: int, cfg) -> np.ndarray:
    tr = trajectory(scenario, x, T, cfg)
    if tr.status.value != "Completed":
        raise RuntimeError(f"orbit escaped while sampling its tail ({tr.status.value})")
    return tr(np.linspace(T / 2, T, count))


@dataclass
class OmegaReport:
    samples: int
    considered: int
    min_margin: float
    flags: int

    @property
    def clean(self) -> bool:
        return self.flags == 0


def omega_boundary_audit(cone: ConeSpec, scenario: Scenario, x, y, T: float = 100.0,
                         shell: float = 0.0, resolution: float = 1e-3, count: int = 400,
                         cfg: Optional[IntegratorConfig] = None, samples=None) -> OmegaReport:
    """Tail samples of omega(y) away from x must avoid the joint boundary at x."""
    x = np.asarray(x, dtype=float)
    tail = _tail(scenario, y, T, count, cfg) if samples is None else np.atleast_2d(samples)
    far = np.linalg.norm(tail - x, axis=1) > resolution
    if not far.any():
        return OmegaReport(len(tail), 0, float("inf"), 0)
    tags, margins = region_margins(cone, tail[far] - x)
    bad = (tags == 3) | (tags == 0) | (margins <= max(shell, cone.strict_margin))
    return OmegaReport(len(tail), int(far.sum()), float(margins.min()), int(bad.sum()))


class LimitSetRelation(enum.Enum):
    APPROX_RELATED = "ApproxRelated"
    UNORDERED_UNION = "UnorderedUnion"
    VIOLATION = "Violation"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class LimitSetReport:
    relation: LimitSetRelation
    cross_min_margin: float
    ordered_pairs: int
    unordered_pairs: int


def limit_set_dichotomy(cone: ConeSpec, scenario: Scenario, x, y, T: float = 100.0,
                        shell: float = 1e-6, resolution: float = 1e-3, count: int = 200,
                        cfg: Optional[IntegratorConfig] = None, tails=None) -> LimitSetReport:
    """Compare the sampled omega-limit tails of two recurrent points."""
    if tails is None:
        a = _tail(scenario, x, T, count, cfg)
        b = _tail(scenario, y, T, count, cfg)
    else:
        a, b = (np.atleast_2d(t) for t in tails)
    tags, margins, i, j = _pair_tags(cone, a, b)
    far = np.linalg.norm(b[j] - a[i], axis=1) > resolution
    tags, margins = tags[far], margins[far]
    ordered = ((tags == 1) | (tags == -1)) & (margins >= shell)
    unordered = (tags == 2) & (margins >= shell)
    n_o, n_u = int(ordered.sum()), int(unordered.sum())
    cm = float(margins.min()) if len(margins) else float("inf")
    if len(margins) and ordered.all():
        return LimitSetReport(LimitSetRelation.APPROX_RELATED, cm, n_o, n_u)
    pooled = np.concatenate([a, b])
    if is_unordered_set(cone, pooled, 0.0, skip_closer_than=resolution):
        return LimitSetReport(LimitSetRelation.UNORDERED_UNION, cm, n_o, n_u)
    if n_o and n_u:
        return LimitSetReport(LimitSetRelation.VIOLATION, cm, n_o, n_u)
    return LimitSetReport(LimitSetRelation.INCONCLUSIVE, cm, n_o, n_u)


@dataclass
class ConsistencyIssue:
    x: np.ndarray
    severity: str  # "violation" or "warning"
    ordered_margin: float
    unordered_margin: float


def connecting_consistency(cone: ConeSpec, component_points, certified, margin: float = 1e-6,
                           resolution: float = 0.0) -> List[ConsistencyIssue]:
    """A certified point seeing the component both ordered and unordered belongs to it."""
    comp = np.atleast_2d(np.asarray(component_points, dtype=float))
    out: List[ConsistencyIssue] = []
    if len(comp) < 2:
        return out
    for c in certified:
        x = np.asarray(getattr(c, "z", c), dtype=float)
        if np.linalg.norm(comp - x, axis=1).min() <= resolution:
            continue
        tags, margins = region_margins(cone, comp - x)
        om = margins[(tags == 1) | (tags == -1)]
        um = margins[tags == 2]
        if len(om) and len(um):
            o, u = float(om.max()), float(um.max())
            sev = "violation" if o > margin and u > margin else "warning"
            out.append(ConsistencyIssue(x.copy(), sev, o, u))
    return out


@dataclass
class AbsorbingReport:
    checked: int
    violations: List[Tuple[np.ndarray, np.ndarray, float]]

    @property
    def clean(self) -> bool:
        return not self.violations


def absorbing_audit(cone: ConeSpec, component_points, equilibria, margin: float = 0.0,
                    resolution: float = 0.0) -> AbsorbingReport:
    """If some representative lies below an outside equilibrium q, all must lie strictly below it."""
    comp = np.atleast_2d(np.asarray(component_points, dtype=float))
    eq = (np.atleast_2d(np.asarray(equilibria, dtype=float)) if len(equilibria)
          else np.zeros((0, comp.shape[1])))
    eta = cone.strict_margin
    checked = 0
    bad = []
    for q in eq:
        if np.linalg.norm(comp - q, axis=1).min() <= resolution:
            continue
        c = cone.transform(q - comp)  # q - x in cone coordinates
        below = np.all(c >= -eta, axis=1) & np.any(c > eta, axis=1)
        above = np.all(c <= eta, axis=1) & np.any(c < -eta, axis=1)
        for hit, sign in ((below, 1.0), (above, -1.0)):
            if not hit.any():
                continue
            checked += 1
            strict = (sign * c).min(axis=1)
            k = int(np.argmin(strict))
            if strict[k] <= max(margin, eta):
                bad.append((q.copy(), comp[k].copy(), float(strict[k])))
    return AbsorbingReport(checked, bad)


# ---------------------------------------------------------------------------
# basins


class BasinKind(enum.Enum):
    LOWER_REPULSION = "LowerRepulsion"
    UPPER_REPULSION = "UpperRepulsion"
    LOWER_OF_PLUS_INFINITY = "LowerOfPlusInfinity"
    UPPER_OF_MINUS_INFINITY = "UpperOfMinusInfinity"
    REPULSION = "Repulsion"
    NOT_CLASSIFIED = "NotClassified"


@dataclass
class BasinLabel:
    kind: BasinKind
    equilibrium: Optional[int] = None
    trace: Optional[AlphaResult] = None

    def __str__(self):
        return self.kind.value if self.equilibrium is None else f"{self.kind.value}({self.equilibrium})"


def _label(ctx: AlphaContext, x: np.ndarray, a: AlphaResult) -> BasinLabel:
    if a.kind is AlphaKind.CONVERGES_TO:
        if np.linalg.norm(x - ctx.equilibria[a.equilibrium]) < ctx.capture_radius and a.side == 0:
            return BasinLabel(BasinKind.NOT_CLASSIFIED, a.equilibrium, a)
        kind = {-1: BasinKind.LOWER_REPULSION, 1: BasinKind.UPPER_REPULSION}.get(a.side, BasinKind.REPULSION)
        return BasinLabel(kind, a.equilibrium, a)
    if a.kind is AlphaKind.ESCAPES_ABOVE_X_STAR:
        return BasinLabel(BasinKind.LOWER_OF_PLUS_INFINITY, None, a)
    if a.kind is AlphaKind.ESCAPES_BELOW_X_SUP:
        return BasinLabel(BasinKind.UPPER_OF_MINUS_INFINITY, None, a)
    return BasinLabel(BasinKind.NOT_CLASSIFIED, None, a)


def basin_classify_batch(ctx: AlphaContext, xs, T_max: float = 100.0) -> List[BasinLabel]:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    return [_label(ctx, x, a) for x, a in zip(xs, alpha_limit_batch(ctx, xs, T_max))]


def basin_classify(ctx: AlphaContext, x, T_max: float = 100.0) -> BasinLabel:
    return basin_classify_batch(ctx, np.asarray(x, dtype=float)[None, :], T_max)[0]


@dataclass
class Target:
    """An equilibrium index into ``ctx.equilibria`` or one of the infinity markers."""

    kind: str  # "equilibrium", PLUS_INF, MINUS_INF, "unknown"
    index: Optional[int] = None
    point: Optional[np.ndarray] = None
    degenerate: bool = False

    def __str__(self):
        if self.kind == "equilibrium":
            return "eq(" + " ".join(f"{v:.6g}" for v in self.point) + ")"
        return self.kind


def equilibrium_target(ctx: AlphaContext, p) -> Target:
    p = np.asarray(p, dtype=float)
    d = np.linalg.norm(ctx.equilibria - p, axis=1)
    j = int(np.argmin(d))
    if d[j] > 1e-6:
        raise ValueError("point is not one of the context equilibria")
    return Target("equilibrium", j, ctx.equilibria[j].copy())


def target_equilibrium_for_component(ctx: AlphaContext, points, T_max: float = 200.0):
    """(lower target p, upper target q) from backward orbits of inf B and sup B."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    q0 = sup_points(ctx.cone, pts)
    p0 = inf_points(ctx.cone, pts)
    res = alpha_limit_batch(ctx, np.stack([p0, q0]), T_max)
    out = []
    for start, a, inf_kind in ((p0, res[0], AlphaKind.ESCAPES_BELOW_X_SUP),
                               (q0, res[1], AlphaKind.ESCAPES_ABOVE_X_STAR)):
        if a.kind is AlphaKind.CONVERGES_TO:
            e = ctx.equilibria[a.equilibrium]
            out.append(Target("equilibrium", a.equilibrium, e.copy(),
                              degenerate=bool(np.linalg.norm(start - e) < ctx.capture_radius)))
        elif a.kind is inf_kind:
            out.append(Target(MINUS_INF if inf_kind is AlphaKind.ESCAPES_BELOW_X_SUP else PLUS_INF))
        else:
            out.append(Target("unknown"))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# cells


class Side(enum.Enum):
    # lower edge of the points whose backward orbits reach q from below, or escape upward
    LOWER = "LowerBoundaryOfLowerRepulsion"
    # upper edge of the points whose backward orbits reach p from above, or escape downward
    UPPER = "UpperBoundaryOfUpperRepulsion"


def _member(label: BasinLabel, target: Target, side: Side) -> Optional[bool]:
    """Ray membership in the target basin; None when the probe is undecided."""
    if label.kind is BasinKind.NOT_CLASSIFIED:
        return None
    if target.kind == PLUS_INF:
        return label.kind is BasinKind.LOWER_OF_PLUS_INFINITY
    if target.kind == MINUS_INF:
        return label.kind is BasinKind.UPPER_OF_MINUS_INFINITY
    want = BasinKind.LOWER_REPULSION if side is Side.LOWER else BasinKind.UPPER_REPULSION
    return label.kind is want and label.equilibrium == target.index


def _classify_probes(ctx, pts, target, side, T_max):
    labels = basin_classify_batch(ctx, pts, T_max)
    member = [_member(lb, target, side) for lb in labels]
    retry = [k for k, m in enumerate(member) if m is None]
    if retry:
        again = basin_classify_batch(ctx, pts[retry], 4 * T_max)
        for k, lb in zip(retry, again):
            member[k] = _member(lb, target, side)
    return member


def mu_on_ray_batch(ctx: AlphaContext, bases, v, target: Target, side: Side, brackets,
                    tol: float = 1e-4, T_max: float = 100.0) -> np.ndarray:
    """Vectorized bisection of the basin boundary along y + mu v; NaN marks Missing.

    Lower side: membership is false at mu_lo and true at mu_hi, mu_y is the
    infimum of membership.  Upper side: true at mu_lo, false at mu_hi, mu_y is
    the supremum.  Order-convexity of the basins makes membership one-sided
    along each ray.
    """
    Y = np.atleast_2d(np.asarray(bases, dtype=float))
    v = np.asarray(v, dtype=float)
    br = np.atleast_2d(np.asarray(brackets, dtype=float))
    lo, hi = br[:, 0].copy(), br[:, 1].copy()
    mu = np.full(len(Y), np.nan)
    ok = np.isfinite(lo) & np.isfinite(hi) & (hi > lo)
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        return mu
    ends = np.concatenate([Y[idx] + lo[idx, None] * v, Y[idx] + hi[idx, None] * v])
    m = _classify_probes(ctx, ends, target, side, T_max)
    m_lo, m_hi = m[: len(idx)], m[len(idx):]
    want_lo, want_hi = (False, True) if side is Side.LOWER else (True, False)
    good = np.array([a is want_lo and b is want_hi for a, b in zip(m_lo, m_hi)], dtype=bool)
    idx = idx[good]
    alive = np.ones(len(idx), dtype=bool)
    while len(idx) and np.any(alive & (hi[idx] - lo[idx] > tol)):
        work = np.flatnonzero(alive & (hi[idx] - lo[idx] > tol))
        k = idx[work]
        mid = 0.5 * (lo[k] + hi[k])
        res = _classify_probes(ctx, Y[k] + mid[:, None] * v, target, side, T_max)
        for w, kk, md, r in zip(work, k, mid, res):
            if r is None:
                alive[w] = False
            elif r is want_lo:
                lo[kk] = md
            else:
                hi[kk] = md
    done = idx[alive]
    mu[done] = 0.5 * (lo[done] + hi[done])
    return mu


def mu_on_ray(ctx: AlphaContext, y, v, target: Target, side: Side, bracket, tol: float = 1e-4,
              T_max: float = 100.0) -> float:
    return float(mu_on_ray_batch(ctx, np.asarray(y, float)[None, :], v, target, side,
                                 np.asarray(bracket, float)[None, :], tol, T_max)[0])


def hyperplane_basis(v) -> np.ndarray:
    """Orthonormal basis (rows) of the hyperplane orthogonal to v, deterministic."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    n = len(v)
    q, _ = np.linalg.qr(np.column_stack([v, np.eye(n)[:, : n - 1] if n > 1 else np.zeros((1, 0))]))
    basis = q[:, 1:n].T
    # fix signs so the first nonzero coordinate is positive
    for r in basis:
        k = int(np.argmax(np.abs(r) > 1e-12))
        if r[k] < 0:
            r *= -1
    return basis


def ray_bracket(lo, hi, y, v) -> Tuple[float, float]:
    """Parameter range where y + mu v stays inside the box [lo, hi]."""
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (lo - y) / v
        b = (hi - y) / v
    t_lo = np.max(np.minimum(a, b))
    t_hi = np.min(np.maximum(a, b))
    return float(t_lo), float(t_hi)


@dataclass
class GridSpec:
    nodes: int = 21
    half_width: float = 0.35
    center: Optional[Sequence[float]] = None  # in hyperplane coordinates

    def axes(self, dim: int) -> List[np.ndarray]:
        c = np.zeros(dim) if self.center is None else np.asarray(self.center, dtype=float)
        if self.nodes == 1:
            return [np.array([c[k]]) for k in range(dim)]
        return [np.linspace(c[k] - self.half_width, c[k] + self.half_width, self.nodes)
                for k in range(dim)]


@dataclass
class CellPatch:
    target: Target
    side: Side
    v: np.ndarray
    origin: np.ndarray
    basis: np.ndarray  # (n-1, n)
    axes: List[np.ndarray]
    heights: np.ndarray  # shape (len(ax0), len(ax1), ...), NaN = Missing
    tol: float
    usable: bool = True

    @property
    def grid_step(self) -> float:
        steps = [np.diff(a).min() for a in self.axes if len(a) > 1]
        return float(min(steps)) if steps else 0.0

    def node_coords(self) -> np.ndarray:
        return np.array(list(itertools.product(*self.axes)))

    def base_points(self) -> np.ndarray:
        return self.origin + self.node_coords() @ self.basis

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.heights)

    def points(self) -> np.ndarray:
        """Cell points y + mu_y v at defined nodes."""
        mu = self.heights.ravel()
        ok = np.isfinite(mu)
        return self.base_points()[ok] + mu[ok, None] * self.v

    def split(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """Hyperplane coordinates and v-height of points."""
        rel = np.atleast_2d(np.asarray(x, dtype=float)) - self.origin
        return rel @ self.basis.T, rel @ self.v

    def interpolate(self, coords) -> np.ndarray:
        """Multilinear height at hyperplane coordinates; NaN outside the defined region."""
        coords = np.atleast_2d(coords)
        if any(len(a) < 2 for a in self.axes):
            return np.full(len(coords), np.nan)
        f = RegularGridInterpolator(self.axes, self.heights, method="linear", bounds_error=False,
                                    fill_value=np.nan)
        return f(coords)

    @property
    def missing_fraction(self) -> float:
        return float(1.0 - self.defined.mean())

    def to_csv(self, path) -> None:
        dim = len(self.axes)
        cols = [f"g{i + 1}" for i in range(dim)] + ["mu", "defined"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for g, mu in zip(self.node_coords(), self.heights.ravel()):
                ok = np.isfinite(mu)
                vals = [repr(float(c)) for c in g] + [repr(float(mu)) if ok else "nan", "1" if ok else "0"]
                fh.write(",".join(vals) + "\n")


def default_origin(scenario: Scenario, v) -> np.ndarray:
    """Midpoint of the valid domain with its v-component removed."""
    v = np.asarray(v, dtype=float)
    c = scenario.domain_center
    return c - (c @ v) * v


def build_cell(ctx: AlphaContext, target: Target, side: Side, grid: GridSpec, tol: float = 1e-4,
               T_max: float = 100.0, v=None, origin=None, bracket=None) -> CellPatch:
    """Height field of a lower or upper basin edge over a grid on the hyperplane through ``origin``.

    Node brackets default to the part of each ray inside the valid domain.
    """
    scenario = ctx.scenario
    v = ctx.cone.direction if v is None else np.asarray(v, float) / np.linalg.norm(v)
    origin = default_origin(scenario, v) if origin is None else np.asarray(origin, dtype=float)
    basis = hyperplane_basis(v)
    axes = grid.axes(len(basis))
    coords = np.array(list(itertools.product(*axes)))
    Y = origin + coords @ basis
    if bracket is None:
        br = np.array([ray_bracket(scenario.domain_lo, scenario.domain_hi, y, v) for y in Y])
    else:
        br = np.tile(np.asarray(bracket, float), (len(Y), 1))
    mu = mu_on_ray_batch(ctx, Y, v, target, side, br, tol, T_max)
    heights = mu.reshape([len(a) for a in axes])
    cell = CellPatch(target, side, v, origin, basis, axes, heights, tol)
    cell.usable = cell.missing_fraction <= 0.5
    if not cell.usable:
        log.warning("cell patch has %.0f%% missing nodes", 100 * cell.missing_fraction)
    return cell


def cone_height_bound(cone: ConeSpec, v, h) -> np.ndarray:
    """Largest |dmu| with h + dmu v outside Int C, for hyperplane offsets h (rows)."""
    cv = cone.transform(v)
    ch = cone.transform(np.atleast_2d(h))
    up = (-ch / cv).max(axis=1)  # h + lam v in C+ iff lam >= up
    down = (ch / cv).max(axis=1)  # h - lam v in -C+ iff lam >= down
    return np.minimum(up, down)


@dataclass
class CellAuditReport:
    applicable: bool
    unorder_margin: float = float("nan")
    invariance_error: float = float("nan")
    closure_ratio: float = float("nan")  # worst adjacent gap / cone bound
    skipped: int = 0
    sampled: int = 0

    @property
    def closure_ok(self) -> bool:
        return bool(self.closure_ratio <= 1.0)


def cell_audit(cell: CellPatch, ctx: AlphaContext, T: float = 1.0, samples: int = 30,
               seed: int = 0, T_max: float = 100.0, rebisect_width: float = 0.05) -> CellAuditReport:
    """Unorderedness, flow invariance and continuity of a reconstructed cell."""
    ok = cell.defined.ravel()
    if ok.sum() < 2:
        return CellAuditReport(False)
    cone = ctx.cone
    pts = cell.points()
    coords = cell.node_coords()[ok]
    # unorderedness over node pairs at least two grid steps apart in the hyperplane
    i, j = np.triu_indices(len(pts), k=1)
    far = np.linalg.norm(coords[j] - coords[i], axis=1) >= 2 * cell.grid_step - 1e-12
    tags, margins = region_margins(cone, pts[j[far]] - pts[i[far]])
    signed = np.where(tags == 2, margins, np.where((tags == 1) | (tags == -1), -margins, 0.0))
    unorder = float(signed.min()) if len(signed) else float("inf")
    # invariance: flow sampled nodes and re-bisect at the projected image
    rng = item_rng(seed, len(pts))
    pick = np.sort(rng.choice(len(pts), size=min(samples, len(pts)), replace=False))
    u = pts[pick]
    errs = []
    skipped = 0
    for t in (T / 2, T):
        img, st, _ = flow_batch(ctx.scenario, u, t, ctx.cfg)
        good = st == COMPLETED
        skipped += int((~good).sum())
        g, h = cell.split(img[good])
        Y = cell.origin + g @ cell.basis
        br = np.stack([h - rebisect_width, h + rebisect_width], axis=1)
        mu = mu_on_ray_batch(ctx, Y, cell.v, cell.target, cell.side, br, cell.tol, T_max)
        missing = ~np.isfinite(mu)
        if missing.any():
            dom = np.array([ray_bracket(ctx.scenario.domain_lo, ctx.scenario.domain_hi, y, cell.v)
                            for y in Y[missing]])
            mu[missing] = mu_on_ray_batch(ctx, Y[missing], cell.v, cell.target, cell.side, dom,
                                          cell.tol, T_max)
        skipped += int((~np.isfinite(mu)).sum())
        fin = np.isfinite(mu)
        errs.extend(np.abs(h[fin] - mu[fin]).tolist())
    inv = float(max(errs)) if errs else float("nan")
    # continuity: adjacent-node gaps against the cone's unordered-graph slope bound
    ratio = 0.0
    H = cell.heights
    for axis in range(H.ndim):
        a = np.take(H, range(H.shape[axis] - 1), axis=axis)
        b = np.take(H, range(1, H.shape[axis]), axis=axis)
        gap = np.abs(b - a)
        step = np.diff(cell.axes[axis]).min()
        bound = float(cone_height_bound(cone, cell.v, step * cell.basis[axis][None, :])[0])
        fin = np.isfinite(gap)
        if fin.any():
            ratio = max(ratio, float(((gap[fin] - 2 * cell.tol) / bound).max()))
    return CellAuditReport(True, unorder, inv, ratio, skipped, len(pick))


@dataclass
class DisjointReport:
    comparable: bool
    separation: float = float("nan")
    shared: int = 0
    threshold: float = float("nan")

    @property
    def disjoint(self) -> bool:
        return self.comparable and self.separation > self.threshold


def cells_disjoint(a: CellPatch, b: CellPatch) -> DisjointReport:
    """Minimum height gap over nodes defined in both patches."""
    same = (np.allclose(a.origin, b.origin) and np.allclose(a.v, b.v)
            and np.allclose(a.basis, b.basis) and len(a.axes) == len(b.axes)
            and all(len(x) == len(y) and np.allclose(x, y) for x, y in zip(a.axes, b.axes)))
    if not same:
        return DisjointReport(False)
    both = a.defined & b.defined
    if not both.any():
        return DisjointReport(False)
    sep = float(np.abs(a.heights[both] - b.heights[both]).min())
    return DisjointReport(True, sep, int(both.sum()), 2 * (a.tol + b.tol))


@dataclass
class ContainmentReport:
    max_deviation: float
    deviations: np.ndarray
    uncovered: int


def containment_check(points, cell: CellPatch, ctx: Optional[AlphaContext] = None,
                      exact: bool = False, T_max: float = 100.0,
                      rebisect_width: float = 0.05) -> ContainmentReport:
    """v-height deviation of points from the cell (interpolated, or re-bisected)."""
    g, h = cell.split(points)
    ref = cell.interpolate(g)
    if exact:
        if ctx is None:
            raise ValueError("exact containment needs an alpha-limit context")
        Y = cell.origin + g @ cell.basis
        br = np.stack([h - rebisect_width, h + rebisect_width], axis=1)
        mu = mu_on_ray_batch(ctx, Y, cell.v, cell.target, cell.side, br, cell.tol, T_max)
        ref = np.where(np.isfinite(mu), mu, ref)
    dev = np.abs(h - ref)
    cov = np.isfinite(dev)
    return ContainmentReport(float(dev[cov].max()) if cov.any() else float("nan"),
                             dev, int((~cov).sum()))


# ---------------------------------------------------------------------------
# B1 / B2 evidence


@dataclass
class BEvidence:
    b1: int = 0
    b2: int = 0
    not_classified: int = 0
    skipped: int = 0
    probes: int = 0

    @property
    def dominant(self) -> str:
        if self.b1 == self.b2:
            return "none" if self.b1 == 0 else "tie"
        return "B1" if self.b1 > self.b2 else "B2"

    @property
    def both_present(self) -> bool:
        return self.b1 > 0 and self.b2 > 0


def classify_B1_B2(ctx: AlphaContext, points, scale: Optional[float] = None,
                   schedule: Sequence[float] = (0.2, 0.1, 0.05, 0.02, 0.01),
                   T_max: float = 100.0, max_points: int = 20) -> BEvidence:
    """Upward probes x + delta v: equilibrium alpha-limits above x (B1) or backward escape (B2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) > max_points:
        pts = pts[np.linspace(0, len(pts) - 1, max_points).astype(int)]
    scale = ctx.scenario.domain_diameter if scale is None else scale
    v = ctx.cone.direction
    probes, owners = [], []
    ev = BEvidence()
    for k, x in enumerate(pts):
        for d in schedule:
            z = x + d * scale * v
            ev.probes += 1
            if not ctx.scenario.in_domain(z)[0]:
                ev.skipped += 1
                continue
            probes.append(z)
            owners.append(k)
    if not probes:
        return ev
    labels = basin_classify_batch(ctx, np.array(probes), T_max)
    eta = ctx.cone.strict_margin
    for lb, k in zip(labels, owners):
        if lb.kind is BasinKind.LOWER_OF_PLUS_INFINITY:
            ev.b2 += 1
        elif lb.equilibrium is not None and lb.kind is not BasinKind.NOT_CLASSIFIED:
            c = ctx.cone.transform(ctx.equilibria[lb.equilibrium] - pts[k])
            if np.all(c >= -eta):
                ev.b1 += 1
            else:
                ev.not_classified += 1
        else:
            ev.not_classified += 1
    return ev


# ---------------------------------------------------------------------------
# occupation measures


@dataclass
class OccupationSupport:
    cover: BoxCover
    fractions: np.ndarray  # visit fraction per active box
    centroids: np.ndarray  # visit-weighted mean sample per active box
    samples: int


def occupation_support(scenario: Scenario, x0, T: float, burn_in: float, depth: int,
                       lo=None, hi=None, threshold: float = 1e-4, dt: float = 0.01,
                       cfg: Optional[IntegratorConfig] = None) -> OccupationSupport:
    """Boxes visited by the trajectory tail with frequency above ``threshold``."""
    if burn_in >= T:
        raise ValueError("burn_in must be shorter than T")
    lo = scenario.domain_lo if lo is None else np.asarray(lo, float)
    hi = scenario.domain_hi if hi is None else np.asarray(hi, float)
    r = dense_batch(scenario, x0, T, cfg)
    if r.status[0] != COMPLETED:
        raise RuntimeError("forward orbit escaped; occupation measure undefined")
    ts = np.arange(burn_in, T, dt)
    xs = r.dense(ts)[:, 0, :]
    cover = BoxCover(lo, hi, depth, np.zeros(0, dtype=np.int64))
    idx = cover.locate(xs)
    inside = idx >= 0
    boxes, inv, counts = np.unique(idx[inside], return_inverse=True, return_counts=True)
    frac = counts / len(xs)
    keep = frac > threshold
    sums = np.zeros((len(boxes), xs.shape[1]))
    np.add.at(sums, inv, xs[inside])
    cent = sums / counts[:, None]
    support = cover.with_active(boxes[keep])
    return OccupationSupport(support, frac[keep], cent[keep], len(xs))
