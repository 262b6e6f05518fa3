"""Acceptance suite: one function per criterion, each returning a result line and
writing deterministic artifacts.  ``run_all`` is what ``verify`` executes."""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .config import RunConfig
from .entropy import entropy_estimate
from .flow import (AlphaContext, attractor_bounds, find_equilibria, flow_batch)
from .integrate import COMPLETED, IntegratorConfig
from .order import (ConeSpec, Relation, cone_leq, hausdorff, order_relate, region_margins,
                    separation_index)
from .pipeline import analyze_recurrence, grid_around, periodic_witness
from .recurrence import (ip_generate, ip_verify, item_rng, recurrent_times, subdivide_iterate,
                         verify_A1)
from .scenarios import make_scenario
from .structure import (GridSpec, PLUS_INF, Side, Target, VerdictTag, build_cell, cell_audit,
                        cells_disjoint, containment_check, default_origin, equilibrium_target,
                        hyperplane_basis, intersection_principle_audit, occupation_support,
                        orbit_samples, target_equilibrium_for_component)

log = logging.getLogger(__name__)

TITLES = {
    1: "order and metric axioms",
    2: "backward order reversal",
    3: "equilibrium census",
    4: "recurrent-set localization",
    5: "intersection principle",
    6: "dichotomy across the scenario suite",
    7: "carrying-simplex cell",
    8: "containment in the upper cell",
    9: "cell disjointness",
    10: "recurrent times and IP sets",
    11: "entropy",
    12: "determinism",
}


@dataclass
class CriterionResult:
    number: int
    passed: bool
    detail: str
    lines: List[str] = field(default_factory=list)

    def line(self) -> str:
        word = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} {word}  {TITLES[self.number]}: {self.detail}"


class Workspace:
    """Artifacts directory plus lazily computed objects shared across criteria."""

    def __init__(self, cfg: RunConfig, out: Optional[str] = None):
        self.cfg = cfg
        self.out = out
        self.seed = cfg.run.seed
        self._cache: Dict[str, object] = {}
        if out:
            os.makedirs(out, exist_ok=True)

    def path(self, name: str) -> Optional[str]:
        return os.path.join(self.out, name) if self.out else None

    def write(self, name: str, text: str) -> None:
        if self.out:
            with open(self.path(name), "w") as fh:
                fh.write(text)

    def cached(self, key: str, make: Callable):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    @property
    def integrator(self) -> IntegratorConfig:
        p = self.cfg.pipeline
        return IntegratorConfig(rel_tol=p.rel_tol, abs_tol=p.abs_tol)

    def scenario(self, name: str):
        return self.cached("scenario:" + name, lambda: make_scenario(name))

    def alpha_ctx(self, name: str) -> AlphaContext:
        sc = self.scenario(name)
        return self.cached("ctx:" + name, lambda: AlphaContext.build(sc, cfg=self.integrator))

    def cycle(self):
        """Certified periodic point on the limit cycle and one period of samples."""
        def make():
            sc = self.scenario("lv3_cycle")
            cr = periodic_witness(sc, self.cfg.pipeline.settle_time, cfg=self.integrator)
            if cr is None:
                raise RuntimeError("no periodic witness found on the limit-cycle scenario")
            return cr, orbit_samples(sc, cr, 100, self.integrator)
        return self.cached("cycle", make)


def _fmt(x) -> str:
    return "[" + " ".join(f"{v:.10g}" for v in np.atleast_1d(x)) + "]"


# ---------------------------------------------------------------------------


def criterion_1(ws: Workspace) -> CriterionResult:
    rng = item_rng(ws.seed, 1)
    trials = 1000
    tol = 1e-12
    fails = dict.fromkeys(["reflexive", "antisymmetric", "transitive", "relation", "dis_translate",
                           "dis_mixed"], 0)
    le = {Relation.EQUAL, Relation.LEQ, Relation.STRICTLY_BELOW}
    worst_translate = -np.inf
    worst_mixed = -np.inf
    for _ in range(trials):
        n = int(rng.integers(2, 5))
        while True:
            G = np.eye(n) + 0.3 * rng.standard_normal((n, n))
            if abs(np.linalg.det(G)) > 0.2 and np.linalg.cond(G) < 50:
                break
        cone = ConeSpec(G)
        x = rng.uniform(-1, 1, n)
        a = rng.uniform(0, 1, n) * (rng.random(n) < 0.7)
        b = rng.uniform(0, 1, n) * (rng.random(n) < 0.7)
        y = x + G @ a
        z = y + G @ b
        if order_relate(cone, x, x) is not Relation.EQUAL or not cone_leq(cone, x, x):
            fails["reflexive"] += 1
        if cone_leq(cone, x, y, tol) and cone_leq(cone, y, x, tol) and np.abs(y - x).max() > 1e-9:
            fails["antisymmetric"] += 1
        if not (cone_leq(cone, x, y, tol) and cone_leq(cone, y, z, tol) and cone_leq(cone, x, z, tol)):
            fails["transitive"] += 1
        # the eta-certified relation must agree: Leq-type, or Marginal only on the boundary
        for u, w, coef in ((x, y, a), (x, z, a + b)):
            r = order_relate(cone, u, w)
            if r not in le and not (r is Relation.MARGINAL and np.any(coef <= cone.strict_margin)):
                fails["relation"] += 1
        A = rng.uniform(-1, 1, (int(rng.integers(1, 8)), n))
        B = rng.uniform(-1, 1, (int(rng.integers(1, 8)), n))
        C = rng.uniform(-1, 1, (int(rng.integers(1, 8)), n))
        p, q = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
        gap = hausdorff(A + p, A + q) - np.linalg.norm(p - q)
        worst_translate = max(worst_translate, float(gap))
        if gap > tol:
            fails["dis_translate"] += 1
        gap = separation_index(A, B) - separation_index(A, C) - hausdorff(B, C)
        worst_mixed = max(worst_mixed, float(gap))
        if gap > tol:
            fails["dis_mixed"] += 1
    ok = not any(fails.values())
    lines = [f"{k} failures {v}" for k, v in fails.items()]
    lines += [f"worst translate slack {worst_translate!r}", f"worst mixed slack {worst_mixed!r}"]
    ws.write("c01_axioms.txt", "\n".join(lines) + "\n")
    return CriterionResult(1, ok, f"{trials} trials, failures {sum(fails.values())}", lines)


def criterion_2(ws: Workspace) -> CriterionResult:
    sc = make_scenario("bistable3")
    cone = ConeSpec.identity(3)
    rng = item_rng(ws.seed, 2)
    m = 200
    lo = rng.uniform(-0.8, 0.6, (m, 3))
    step = rng.uniform(0.05, 0.2, (m, 3)) * (rng.random((m, 3)) < 0.6)
    step[np.arange(m), rng.integers(0, 3, m)] = rng.uniform(0.05, 0.2, m)  # at least one positive
    hi = lo + step
    t = rng.uniform(0.1, 5.0, m)
    margins = np.empty(m)
    status_ok = True
    for i in range(m):
        pts, st, _ = flow_batch(sc, np.stack([lo[i], hi[i]]), -t[i], ws.integrator)
        status_ok &= bool(np.all(st == COMPLETED))
        tags, mg = region_margins(cone, (pts[1] - pts[0])[None, :])
        margins[i] = mg[0] if tags[0] == 1 else -mg[0]
    worst = float(margins.min())
    ok = status_ok and worst >= 1e-6
    ws.write("c02_margins.csv", "pair,t,margin\n" + "".join(
        f"{i},{t[i]!r},{margins[i]!r}\n" for i in range(m)))
    return CriterionResult(2, ok, f"{m} pairs, minimum strict-order margin {worst:.4g}")


def criterion_3(ws: Workspace) -> CriterionResult:
    lv2 = make_scenario("lv2")
    eq = np.array([r.point for r in find_equilibria(lv2)])
    interior = eq[np.all(eq > 1e-6, axis=1)]
    err_lv = float(np.linalg.norm(interior - 2 / 3, axis=1).min()) if len(interior) else np.inf
    bi = make_scenario("bistable2")
    beq = np.array([r.point for r in find_equilibria(bi)])
    a = math.sqrt(0.9)
    err_bi = max(float(np.linalg.norm(beq - s * np.array([a, a]), axis=1).min()) for s in (1, -1))
    ok = err_lv < 1e-8 and len(beq) == 9 and err_bi < 1e-8
    lines = ["lv2 " + _fmt(p) for p in eq] + ["bistable2 " + _fmt(p) for p in beq]
    ws.write("c03_equilibria.txt", "\n".join(lines) + "\n")
    return CriterionResult(3, ok, f"lv2 interior error {err_lv:.2e}; bistable2 count {len(beq)}, "
                                  f"diagonal error {err_bi:.2e}")


def criterion_4(ws: Workspace) -> CriterionResult:
    lin = make_scenario("linear2")
    sub = subdivide_iterate(lin, depth_schedule=(2, 4, 6, 8), seed=ws.seed, cfg=ws.integrator)
    cov = sub.cover
    diam = cov.diameter("sup")
    radius = float(cov.radius.max())
    has_origin = bool(cov.contains(np.zeros((1, 2)))[0])
    lin_ok = sub.cover.depth == 8 and diam <= 4 * radius + 1e-12 and has_origin
    if ws.out:
        cov.to_csv(ws.path("c04_linear_cover.csv"))
    bi = make_scenario("bistable2")
    ana = ws.cached("bistable2:8", lambda: analyze_recurrence(
        bi, ConeSpec.identity(2), (2, 4, 6, 8), seed=ws.seed, cfg=ws.integrator))
    eq = ana.equilibria
    hits = [sum(c.contains_point(ana.cover, p) for p in eq) for c in ana.components]
    owners = [sum(c.contains_point(ana.cover, p) for c in ana.components) for p in eq]
    bi_ok = len(ana.components) == 9 and all(h == 1 for h in hits) and all(o == 1 for o in owners)
    if ws.out:
        ana.cover.to_csv(ws.path("c04_bistable_cover.csv"))
    return CriterionResult(4, lin_ok and bi_ok,
                           f"linear diameter {diam:.6g} = {diam / radius:.3g} radii, origin covered "
                           f"{has_origin}; bistable2 components {len(ana.components)}, equilibria "
                           f"per component {sorted(hits)}")


def criterion_5(ws: Workspace) -> CriterionResult:
    bi = make_scenario("bistable2")
    cone = ConeSpec.identity(2)
    ana = ws.cached("bistable2:8", lambda: analyze_recurrence(
        bi, cone, (2, 4, 6, 8), seed=ws.seed, cfg=ws.integrator))
    certs = ana.certified
    own = []
    for c in certs:
        comp = [k.boxes for k in ana.components if k.contains_point(ana.cover, c.z)]
        own.append(np.concatenate(comp) if comp else np.zeros(0, dtype=np.int64))
    rep = intersection_principle_audit(cone, certs, ana.cover, shell=0.01, exclude=own,
                                       resolution=1e-6)
    ok = len(certs) == 9 and rep.clean and rep.min_pair_margin >= 0.01
    lines = [f.line() for f in rep.pair_flags + rep.box_flags]
    ws.write("c05_flags.txt", "".join(s + "\n" for s in lines) or "no flags\n")
    return CriterionResult(5, ok, f"{len(certs)} certified, minimum pair margin "
                                  f"{rep.min_pair_margin:.4g}, flags {len(lines)} "
                                  f"({rep.pairs_checked} pairs, {rep.boxes_checked} box checks)")


def criterion_6(ws: Workspace) -> CriterionResult:
    suite = [("linear2", (2, 4, 6, 8)), ("bistable2", (2, 4, 6, 8)), ("bistable3", (2, 4, 6)),
             ("may_leonard", (2, 4, 6, 8)), ("lv3_cycle", tuple(ws.cfg.pipeline.depth_schedule))]
    lines = []
    violations = 0
    inconclusive = 0
    classified = 0
    cycle_ok = False
    for name, sched in suite:
        sc = ws.scenario(name)
        cone = ConeSpec.identity(sc.dimension)
        if name == "bistable2" and tuple(sched) == (2, 4, 6, 8):
            ana = ws.cached("bistable2:8", lambda: analyze_recurrence(
                sc, cone, sched, seed=ws.seed, cfg=ws.integrator))
        else:
            ana = analyze_recurrence(sc, cone, sched, seed=ws.seed, cfg=ws.integrator)
        if ws.out:
            ana.write_components(ws.path(f"c06_{name}_components.csv"))
        for comp in ana.components:
            if comp.verdict is None:
                continue
            classified += 1
            tag = comp.verdict.tag
            violations += tag is VerdictTag.VIOLATION
            inconclusive += tag is VerdictTag.INCONCLUSIVE
            periodic = any(c.t > 1.0 for c in comp.certified)
            if name == "lv3_cycle" and periodic:
                cycle_ok = tag is VerdictTag.UNORDERED and comp.verdict.margin > 0
                lines.append(f"lv3_cycle periodic component verdict {comp.verdict}")
        lines.append(f"{name}: components {len(ana.components)}, classified "
                     f"{sum(c.verdict is not None for c in ana.components)}")
    ok = violations == 0 and cycle_ok
    ws.write("c06_summary.txt", "\n".join(lines) + "\n")
    return CriterionResult(6, ok, f"{classified} classified components, violations {violations}, "
                                  f"inconclusive {inconclusive}, limit-cycle unordered {cycle_ok}",
                           lines)


def _ml_cells(ws: Workspace):
    def make():
        ctx = ws.alpha_ctx("may_leonard")
        p = ws.cfg.pipeline
        grid = GridSpec(21, p.grid_half_width)
        up = build_cell(ctx, equilibrium_target(ctx, np.zeros(3)), Side.UPPER, grid,
                        p.bisection_tol, p.cell_T_max)
        low = build_cell(ctx, Target(PLUS_INF), Side.LOWER, grid, p.bisection_tol, p.cell_T_max)
        return up, low
    return ws.cached("ml_cells", make)


def criterion_7(ws: Workspace) -> CriterionResult:
    ctx = ws.alpha_ctx("may_leonard")
    cell, _ = _ml_cells(ws)
    h = cell.heights
    center = float(h[h.shape[0] // 2, h.shape[1] // 2])
    err = abs(center - math.sqrt(3) / 2)
    aud = cell_audit(cell, ctx, T=1.0, seed=ws.seed, T_max=ws.cfg.pipeline.cell_T_max)
    cont = containment_check(np.array([[0.5, 0.5, 0.5]]), cell, ctx, exact=True)
    ok = (err < 1e-3 and aud.unorder_margin > 0 and aud.invariance_error < 1e-3
          and cont.max_deviation < 1e-3 and cell.usable)
    if ws.out:
        cell.to_csv(ws.path("c07_upper_origin_cell.csv"))
    return CriterionResult(7, ok, f"center height {center:.8f} (error {err:.2e}), unorder margin "
                                  f"{aud.unorder_margin:.4g}, invariance error "
                                  f"{aud.invariance_error:.3g}, equilibrium deviation "
                                  f"{cont.max_deviation:.3g}, closure ratio {aud.closure_ratio:.3g}")


def criterion_8(ws: Workspace) -> CriterionResult:
    sc = ws.scenario("lv3_cycle")
    ctx = ws.alpha_ctx("lv3_cycle")
    p = ws.cfg.pipeline
    cr, samples = ws.cycle()
    lower, upper = target_equilibrium_for_component(ctx, samples)
    if lower.kind != "equilibrium":
        return CriterionResult(8, False, f"lower target not an equilibrium ({lower})")
    v = ctx.cone.direction
    origin = default_origin(sc, v)
    grid = grid_around(origin, hyperplane_basis(v), samples, p.grid_nodes)
    cell = build_cell(ctx, lower, Side.UPPER, grid, p.bisection_tol, p.cell_T_max)
    on_cycle = containment_check(samples, cell, ctx, exact=True)
    occ = occupation_support(sc, cr.z, p.occupation_T, p.occupation_burn_in, p.occupation_depth,
                             lo=np.zeros(3), hi=np.full(3, 3.0), cfg=ws.integrator)
    on_support = containment_check(occ.centroids, cell)
    tol = p.containment_tol
    ok = (on_cycle.max_deviation <= tol and on_cycle.uncovered == 0
          and on_support.max_deviation <= tol and on_support.uncovered == 0)
    if ws.out:
        cell.to_csv(ws.path("c08_upper_cell.csv"))
        occ.cover.to_csv(ws.path("c08_occupation_support.csv"))
    return CriterionResult(8, ok, f"targets p={lower} q={upper}; cycle deviation "
                                  f"{on_cycle.max_deviation:.3g}, support deviation "
                                  f"{on_support.max_deviation:.3g} over {len(occ.centroids)} boxes")


def criterion_9(ws: Workspace) -> CriterionResult:
    up, low = _ml_cells(ws)
    rep = cells_disjoint(up, low)
    if ws.out:
        low.to_csv(ws.path("c09_lower_infinity_cell.csv"))
    return CriterionResult(9, rep.disjoint, f"separation {rep.separation:.4g} over {rep.shared} "
                                            f"shared nodes, threshold {rep.threshold:.4g}")


def criterion_10(ws: Workspace) -> CriterionResult:
    sc = ws.scenario("lv3_cycle")
    p = ws.cfg.pipeline
    cfg = ws.integrator
    diam = ws.cached("lv3_diameter", lambda: attractor_bounds(sc, cfg=cfg).diameter)
    theta = p.theta if p.theta is not None else p.theta_fraction * diam
    cr, _ = ws.cycle()
    interior = ws.alpha_ctx("lv3_cycle").equilibria
    eq_point = interior[np.all(interior > 1e-6, axis=1)][0]
    lines = [f"theta {theta!r} diameter {diam!r}"]
    ip_ok = True
    witness_rates = {}
    rng = item_rng(ws.seed, 10)
    taus = np.exp(rng.uniform(np.log(1.0), np.log(200.0), p.a1_trials))
    epss = taus * rng.uniform(0.01, 0.45, p.a1_trials)
    for label, z in (("equilibrium", eq_point), ("periodic", cr.z)):
        ip = ip_generate(sc, z, theta, p.ip_generators, p.horizon, cfg, seed=ws.seed)
        ver = ip_verify(sc, z, theta, ip.generators, cfg)
        good = ver.passed and len(ip.generators) == p.ip_generators
        ip_ok &= good
        ws.write(f"c10_ipset_{label}.txt", ip.report())
        lines.append(f"{label} ip sums {2 ** len(ip.generators) - 1} worst {ver.worst_error:.3g} "
                     f"passed {good}")
        rts = recurrent_times(sc, z, theta, p.horizon, 0.05, cfg)
        if ws.out:
            rts.to_csv(ws.path(f"c10_recurrent_times_{label}.csv"))
        hits = 0
        rows = []
        for tau, eps in zip(taus, epss):
            w = verify_A1(sc, z, theta, float(tau), float(eps), p.horizon, cfg, rts=rts)
            hits += w.found
            rows.append(f"{tau!r},{eps!r},{w.label},{w.n},{w.s!r},{w.error!r}\n")
        ws.write(f"c10_a1_{label}.csv", "tau,eps,outcome,n,s,error\n" + "".join(rows))
        witness_rates[label] = hits / len(taus)
        lines.append(f"{label} A1 witness rate {witness_rates[label]:.3f}")
    ok = ip_ok and witness_rates["equilibrium"] == 1.0 and witness_rates["periodic"] >= 0.95
    ws.write("c10_summary.txt", "\n".join(lines) + "\n")
    return CriterionResult(10, ok, f"IP sets verified {ip_ok}; A1 witness rates equilibrium "
                                   f"{witness_rates['equilibrium']:.2f}, periodic "
                                   f"{witness_rates['periodic']:.2f}", lines)


def criterion_11(ws: Workspace) -> CriterionResult:
    sc = ws.scenario("lv3_cycle")
    p = ws.cfg.pipeline
    cr, _ = ws.cycle()
    samples = orbit_samples(sc, cr, 400, ws.integrator)
    rep = entropy_estimate(sc, samples, p.entropy_horizons, p.entropy_epsilons, ws.integrator)
    lv2 = make_scenario("lv2")
    ctrl = entropy_estimate(lv2, [[2 / 3, 2 / 3]], p.entropy_horizons, p.entropy_epsilons,
                            ws.integrator)
    ok = rep.zero_entropy and rep.monotone and ctrl.headline == 0.0
    if ws.out:
        rep.to_csv(ws.path("c11_entropy_cycle.csv"))
        ctrl.to_csv(ws.path("c11_entropy_control.csv"))
    ws.write("c11_verdict.txt", f"cycle {rep.verdict()}\ncontrol {ctrl.verdict()}\n")
    return CriterionResult(11, ok, f"cycle headline {rep.headline:.4g}, control {ctrl.headline!r}")


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
            11: criterion_11}


def run_all(cfg: RunConfig, out: Optional[str] = None, only=None,
            echo: Optional[Callable[[str], None]] = None) -> List[CriterionResult]:
    """Run criteria 1..11 (or ``only``); the summary file omits timings to stay reproducible."""
    ws = Workspace(cfg, out)
    results = []
    for k in sorted(only or CRITERIA):
        start = time.perf_counter()
        try:
            res = CRITERIA[k](ws)
        except Exception as exc:  # a crash is a failed criterion, not a dead pipeline
            log.exception("criterion %d raised", k)
            res = CriterionResult(k, False, f"raised {type(exc).__name__}: {exc}")
        results.append(res)
        if echo:
            echo(f"{res.line()}  [{time.perf_counter() - start:.1f}s]")
    ws.write("verify_summary.txt", "".join(r.line() + "\n" for r in results))
    return results
