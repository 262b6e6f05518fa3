"""Numerical flow of a scenario: integration, equilibria, attractor box, alpha-limits."""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import networkx as nx
import numpy as np

from .integrate import (BLOWUP, COMPLETED, ESCAPED, STOPPED, IntegratorConfig,
                        integrate_batch)
from .order import ConeSpec
from .scenarios import Scenario

log = logging.getLogger(__name__)

NEWTON_DEDUP = 1e-6
STABILITY_MARGIN = 1e-7
CONVERGENCE_RADIUS = 1e-6


def _cfg_for(scenario: Scenario, cfg: Optional[IntegratorConfig]) -> IntegratorConfig:
    cfg = cfg or IntegratorConfig()
    if cfg.escape_radius is None:
        cfg = IntegratorConfig(cfg.rel_tol, cfg.abs_tol, cfg.max_step, scenario.escape_radius,
                               cfg.max_time, cfg.min_step, cfg.max_steps)
    return cfg


class FlowStatus(enum.Enum):
    COMPLETED = "Completed"
    ESCAPED = "Escaped"
    BLOWUP_SUSPECTED = "BlowupSuspected"


_STATUS = {COMPLETED: FlowStatus.COMPLETED, ESCAPED: FlowStatus.ESCAPED,
           BLOWUP: FlowStatus.BLOWUP_SUSPECTED, STOPPED: FlowStatus.COMPLETED}


@dataclass
class FlowResult:
    point: np.ndarray
    status: FlowStatus
    time: float  # signed time actually reached

    @property
    def ok(self) -> bool:
        return self.status is FlowStatus.COMPLETED


@dataclass
class Trajectory:
    """Sampled orbit with a dense interpolant; ``times`` are signed."""

    times: np.ndarray
    states: np.ndarray
    status: FlowStatus
    stop_time: float
    _dense: object = field(repr=False, default=None)
    _sign: float = 1.0

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = self._dense(np.abs(np.atleast_1d(t)))[:, 0, :]
        return out if t.ndim else out[0]

    def to_csv(self, path, times=None) -> None:
        t = self.times if times is None else np.asarray(times, float)
        x = self.states if times is None else self(t)
        n = x.shape[1]
        header = "t," + ",".join(f"x{i + 1}" for i in range(n))
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for ti, xi in zip(t, x):
                fh.write(",".join(repr(float(v)) for v in (ti, *xi)) + "\n")


def eval_field(scenario: Scenario, x) -> np.ndarray:
    return scenario(np.asarray(x, dtype=float))


def flow_map(scenario: Scenario, x, t: float, cfg: Optional[IntegratorConfig] = None) -> FlowResult:
    """Time-t flow of x; negative t integrates the reversed field."""
    cfg = _cfg_for(scenario, cfg)
    x = np.asarray(x, dtype=float)
    r = integrate_batch(scenario.field, x[None, :], t, cfg)
    sign = -1.0 if t < 0 else 1.0
    return FlowResult(r.states[0], _STATUS[int(r.status[0])], sign * float(r.stop_time[0]))


def flow_batch(scenario: Scenario, xs, t: float, cfg: Optional[IntegratorConfig] = None):
    """Vectorized flow map; returns (states, status codes, signed stop times)."""
    cfg = _cfg_for(scenario, cfg)
    r = integrate_batch(scenario.field, np.atleast_2d(xs), t, cfg)
    sign = -1.0 if t < 0 else 1.0
    return r.states, r.status, sign * r.stop_time


def trajectory(scenario: Scenario, x, t: float, cfg: Optional[IntegratorConfig] = None) -> Trajectory:
    cfg = _cfg_for(scenario, cfg)
    x = np.asarray(x, dtype=float)
    r = integrate_batch(scenario.field, x[None, :], t, cfg, dense=True)
    sign = -1.0 if t < 0 else 1.0
    d = r.dense
    return Trajectory(sign * d.nodes, d.y[:, 0, :], _STATUS[int(r.status[0])],
                      sign * float(r.stop_time[0]), d, sign)


def dense_batch(scenario: Scenario, xs, t: float, cfg: Optional[IntegratorConfig] = None):
    cfg = _cfg_for(scenario, cfg)
    return integrate_batch(scenario.field, np.atleast_2d(xs), t, cfg, dense=True)


def semigroup_residual(scenario: Scenario, x, s: float, t: float,
                       cfg: Optional[IntegratorConfig] = None) -> float:
    """Gap between flowing s then t and flowing s + t; an integration-quality probe."""
    a = flow_map(scenario, x, s, cfg)
    if not a.ok:
        raise RuntimeError(f"orbit escaped during first leg ({a.status.value})")
    b = flow_map(scenario, a.point, t, cfg)
    c = flow_map(scenario, x, s + t, cfg)
    if not (b.ok and c.ok):
        raise RuntimeError("orbit escaped during residual check")
    return float(np.linalg.norm(b.point - c.point))


# ---------------------------------------------------------------------------
# competitiveness


@dataclass
class CompetitivenessReport:
    max_offdiag: float
    irreducible: bool
    all_nonpositive: bool
    sample_count: int
    sign_graph: np.ndarray  # True where the entry was strictly negative at every sample

    @property
    def strongly_competitive(self) -> bool:
        return self.all_nonpositive and self.irreducible


def check_strong_competitiveness(scenario: Scenario, sample_count: int = 200, seed: int = 0,
                                 cone: Optional[ConeSpec] = None) -> CompetitivenessReport:
    """Sample Jacobians over the valid domain in cone coordinates."""
    n = scenario.dimension
    cone = cone or ConeSpec.identity(n)
    rng = np.random.default_rng(seed)
    lo, hi = scenario.domain_lo, scenario.domain_hi
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    pts = np.concatenate([corners, lo + (hi - lo) * rng.random((sample_count, n))])
    if not np.all(scenario.in_domain(pts)):
        raise ValueError("sample outside the domain of definition")
    off = ~np.eye(n, dtype=bool)
    worst = -np.inf
    negative = np.ones((n, n), dtype=bool)
    for x in pts:
        Jt = cone.inverse @ scenario.jacobian(x) @ cone.generators
        worst = max(worst, float(Jt[off].max()))
        negative &= Jt < 0
    negative &= off
    g = nx.from_numpy_array(negative.astype(int), create_using=nx.DiGraph)
    irreducible = n == 1 or nx.is_strongly_connected(g)
    return CompetitivenessReport(worst, bool(irreducible), worst <= 0.0, len(pts), negative)


# ---------------------------------------------------------------------------
# equilibria


class Stability(enum.Enum):
    ATTRACTING = "Attracting"
    REPELLING = "Repelling"
    SADDLE = "Saddle"
    MARGINAL = "Marginal"


@dataclass
class EquilibriumRecord:
    point: np.ndarray
    residual: float
    eigen_real: np.ndarray
    stability: Stability


def classify_stability(J: np.ndarray, margin: float = STABILITY_MARGIN):
    try:
        if abs(np.linalg.det(J)) < 1e-14:
            return np.linalg.eigvals(J).real, Stability.MARGINAL
    except np.linalg.LinAlgError:
        return np.full(len(J), np.nan), Stability.MARGINAL
    re = np.sort(np.linalg.eigvals(J).real)
    if np.any(np.abs(re) <= margin):
        return re, Stability.MARGINAL
    if np.all(re < 0):
        return re, Stability.ATTRACTING
    if np.all(re > 0):
        return re, Stability.REPELLING
    return re, Stability.SADDLE


def _newton(scenario: Scenario, x, tol: float, max_iter: int = 60):
    x = np.array(x, dtype=float)
    fx = scenario(x)
    nf = np.linalg.norm(fx)
    for _ in range(max_iter):
        if nf < tol:
            return x, nf
        J = scenario.jacobian(x)
        try:
            step = np.linalg.solve(J, fx)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, fx, rcond=None)[0]
        lam = 1.0
        while lam > 1e-4:
            cand = x - lam * step
            fc = scenario(cand)
            nc = np.linalg.norm(fc)
            if np.isfinite(nc) and nc < (1 - 1e-4 * lam) * nf:
                break
            lam *= 0.5
        else:
            return x, nf
        x, fx, nf = cand, fc, nc
    return x, nf


def seed_grid(lo, hi, per_axis: int) -> np.ndarray:
    axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
    return np.array(list(itertools.product(*axes)))


def find_equilibria(scenario: Scenario, seeds=None, newton_tol: float = 1e-10,
                    per_axis: int = 7, dedup: float = NEWTON_DEDUP,
                    report_lo=None, report_hi=None,
                    margin: float = STABILITY_MARGIN) -> List[EquilibriumRecord]:
    """Damped Newton from every seed; roots deduplicated and sorted.

    Roots are reported when they fall in [report_lo, report_hi] (defaults to the
    valid domain).
    """
    lo = scenario.domain_lo if report_lo is None else np.asarray(report_lo, float)
    hi = scenario.domain_hi if report_hi is None else np.asarray(report_hi, float)
    if seeds is None:
        seeds = seed_grid(scenario.domain_lo, scenario.domain_hi, per_axis)
    roots: List[np.ndarray] = []
    for s in np.atleast_2d(seeds):
        x, res = _newton(scenario, s, newton_tol)
        if res >= newton_tol or not np.all(np.isfinite(x)):
            continue
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            continue
        if any(np.linalg.norm(x - r) < dedup for r in roots):
            continue
        roots.append(x)
    roots.sort(key=lambda r: tuple(np.round(r, 9)))
    out = []
    for r in roots:
        re, st = classify_stability(scenario.jacobian(r), margin)
        out.append(EquilibriumRecord(r, float(np.linalg.norm(scenario(r))), re, st))
    return out


def equilibrium_set(scenario: Scenario, newton_tol: float = 1e-10) -> np.ndarray:
    """Equilibria used as alpha-limit targets.

    Kolmogorov fields use exact support enumeration over the closed orthant;
    others use the Newton sweep over the valid domain.
    """
    exact = scenario.exact_equilibria()
    if exact is not None:
        return exact
    recs = find_equilibria(scenario, newton_tol=newton_tol)
    return np.array([r.point for r in recs]).reshape(-1, scenario.dimension)


# ---------------------------------------------------------------------------
# attractor box


@dataclass
class AttractorBounds:
    lo: np.ndarray
    hi: np.ndarray
    x_star: np.ndarray  # inf of the box in the cone order
    x_sup: np.ndarray  # sup of the box in the cone order
    escaped: int = 0

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))


def attractor_bounds(scenario: Scenario, sample_count: int = 64, T_settle: float = 50.0,
                     cfg: Optional[IntegratorConfig] = None, seed: int = 0,
                     cone: Optional[ConeSpec] = None, extra_points=None) -> AttractorBounds:
    """Bounding box of settled forward tails, inflated by 5% per axis."""
    n = scenario.dimension
    cone = cone or ConeSpec.identity(n)
    rng = np.random.default_rng(seed)
    lo, hi = scenario.domain_lo, scenario.domain_hi
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    pts = np.concatenate([corners, lo + (hi - lo) * rng.random((sample_count, n))])
    states, status, _ = flow_batch(scenario, pts, T_settle, cfg)
    if np.any(status != COMPLETED):
        bad = int(np.sum(status != COMPLETED))
        raise RuntimeError(f"dissipation violated: {bad} samples escaped forward")
    tails = states
    if extra_points is not None:
        tails = np.concatenate([tails, np.atleast_2d(extra_points)])
    blo, bhi = tails.min(axis=0), tails.max(axis=0)
    w = bhi - blo
    pad = 0.05 * np.maximum(w, np.abs(bhi) + np.abs(blo)) / 2
    blo, bhi = blo - pad, bhi + pad
    box_corners = np.array(list(itertools.product(*zip(blo, bhi))))
    c = cone.transform(box_corners)
    x_star = cone.untransform(c.min(axis=0))
    x_sup = cone.untransform(c.max(axis=0))
    return AttractorBounds(blo, bhi, x_star, x_sup)


# ---------------------------------------------------------------------------
# alpha-limit classification


class AlphaKind(enum.Enum):
    CONVERGES_TO = "ConvergesTo"
    ESCAPES_ABOVE_X_STAR = "EscapesAboveXStar"
    ESCAPES_BELOW_X_SUP = "EscapesBelowXSup"
    ESCAPES_MIXED = "EscapesMixed"
    BOUNDED_NONCONVERGENT = "BoundedNonconvergent"
    UNKNOWN = "Unknown"


@dataclass
class AlphaResult:
    kind: AlphaKind
    equilibrium: Optional[int] = None  # index into the equilibrium array
    point: Optional[np.ndarray] = None  # state at the decision
    time: float = 0.0  # backward time elapsed
    side: int = 0  # +1: state >> p at capture, -1: state << p, 0: otherwise


@dataclass
class AlphaContext:
    """Everything alpha-limit classification needs besides the point."""

    scenario: Scenario
    cone: ConeSpec
    equilibria: np.ndarray
    x_star: np.ndarray
    x_sup: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray
    cfg: IntegratorConfig
    capture_radius: float = CONVERGENCE_RADIUS
    dwell: float = 1.0
    escape_margin: float = 0.0

    @classmethod
    def build(cls, scenario: Scenario, cone: Optional[ConeSpec] = None,
              cfg: Optional[IntegratorConfig] = None, bounds: Optional[AttractorBounds] = None,
              equilibria=None, **kw) -> "AlphaContext":
        cone = cone or ConeSpec.identity(scenario.dimension)
        cfg = _cfg_for(scenario, cfg)
        eq = equilibrium_set(scenario) if equilibria is None else np.atleast_2d(equilibria)
        if bounds is None:
            bounds = attractor_bounds(scenario, cfg=cfg, cone=cone, extra_points=eq)
        return cls(scenario, cone, eq, bounds.x_star, bounds.x_sup, bounds.lo, bounds.hi, cfg, **kw)


def alpha_limit_batch(ctx: AlphaContext, xs, T_max: float) -> List[AlphaResult]:
    """Backward classification of many points in one vectorized integration."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    m = len(xs)
    eq = ctx.equilibria
    entered_at = np.full(m, -1.0)
    entered_eq = np.full(m, -1, dtype=int)

    def monitor(t, X, idx):
        codes = np.zeros(len(idx), dtype=int)
        if len(eq) == 0:
            return codes
        d = np.linalg.norm(X[:, None, :] - eq[None, :, :], axis=2)
        j = np.argmin(d, axis=1)
        inside = d[np.arange(len(idx)), j] < ctx.capture_radius
        tt = np.broadcast_to(np.abs(t), (len(idx),))
        prev = entered_eq[idx]
        fresh = inside & (prev != j)
        entered_eq[idx[fresh]] = j[fresh]
        entered_at[idx[fresh]] = tt[fresh]
        left = ~inside
        entered_eq[idx[left]] = -1
        done = inside & (tt - entered_at[idx] >= ctx.dwell)
        codes[done] = 1
        return codes

    r = integrate_batch(ctx.scenario.field, xs, -T_max, ctx.cfg, monitor=monitor)
    out = []
    c_star = ctx.cone.transform(ctx.x_star)
    c_sup = ctx.cone.transform(ctx.x_sup)
    eta = max(ctx.cone.strict_margin, ctx.escape_margin)
    for i in range(m):
        st = int(r.status[i])
        x = r.states[i]
        t = float(r.stop_time[i])
        if st == STOPPED:
            j = int(entered_eq[i])
            # strict signs: at capture scale the offset can sit far below strict_margin
            c = ctx.cone.transform(x - eq[j])
            side = 1 if np.all(c > 0) else (-1 if np.all(c < 0) else 0)
            out.append(AlphaResult(AlphaKind.CONVERGES_TO, j, x, t, side))
        elif st in (ESCAPED, BLOWUP):
            c = ctx.cone.transform(x)
            if np.all(c - c_star > eta):
                kind = AlphaKind.ESCAPES_ABOVE_X_STAR
            elif np.all(c_sup - c > eta):
                kind = AlphaKind.ESCAPES_BELOW_X_SUP
            else:
                kind = AlphaKind.ESCAPES_MIXED
            out.append(AlphaResult(kind, None, x, t))
        else:
            span = ctx.box_hi - ctx.box_lo
            inside = np.all((x >= ctx.box_lo - span) & (x <= ctx.box_hi + span))
            kind = AlphaKind.BOUNDED_NONCONVERGENT if inside else AlphaKind.UNKNOWN
            out.append(AlphaResult(kind, None, x, t))
    return out


def alpha_limit_classify(ctx: AlphaContext, x, T_max: float = 100.0) -> AlphaResult:
    return alpha_limit_batch(ctx, np.asarray(x, dtype=float)[None, :], T_max)[0]
