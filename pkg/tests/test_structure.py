import itertools
import math

import numpy as np
import pytest

from compdyn.flow import AlphaContext, equilibrium_set, find_equilibria
from compdyn.order import ConeSpec
from compdyn.pipeline import periodic_witness
from compdyn.scenarios import make_scenario
from compdyn.structure import (PLUS_INF, BasinKind, CellPatch, GridSpec, LimitSetRelation, Side,
                               Target, VerdictTag, absorbing_audit, basin_classify, build_cell,
                               cell_audit, cells_disjoint, classify_B1_B2, classify_component,
                               connecting_consistency, containment_check, equilibrium_target,
                               hyperplane_basis, intersection_principle_audit,
                               limit_set_dichotomy, mu_on_ray, occupation_support, orbit_samples,
                               ray_bracket)

A = math.sqrt(0.9)
I2, I3 = ConeSpec.identity(2), ConeSpec.identity(3)
DIAG3 = np.ones(3) / math.sqrt(3)


@pytest.fixture(scope="module")
def bistable_eq():
    return np.array([r.point for r in find_equilibria(make_scenario("bistable2"))])


@pytest.fixture(scope="module")
def ml_ctx():
    return AlphaContext.build(make_scenario("may_leonard"))


@pytest.fixture(scope="module")
def bistable_ctx():
    return AlphaContext.build(make_scenario("bistable2"))


@pytest.fixture(scope="module")
def cycle():
    sc = make_scenario("lv3_cycle")
    cr = periodic_witness(sc)
    assert cr is not None
    eq = equilibrium_set(sc)
    p = eq[np.all(eq > 0, axis=1)][0]
    return sc, cr, orbit_samples(sc, cr, 100), p


def _joint_margin_oracle(points):
    # plain identity-cone arithmetic, independent of the order module
    best = np.inf
    for x, y in itertools.combinations(points, 2):
        d = y - x
        if np.all(d > 0) or np.all(d < 0):
            m = np.abs(d).min()
        else:
            m = min(d.max(), (-d).max())
        best = min(best, m)
    return best


def test_singleton_and_chain_verdicts(bistable_eq):
    assert classify_component(I2, [[A, A]], bistable_eq).tag is VerdictTag.SINGLETON_TRIVIAL
    chain = [[-A, -A], [0, 0], [A, A]]
    v = classify_component(I2, chain, bistable_eq)
    assert v.tag is VerdictTag.STRONGLY_ORDERED_EQUILIBRIA
    assert np.all(np.diff(v.projections) > 0)


def test_ordered_non_equilibria_violate(bistable_eq):
    v = classify_component(I2, [[0.1, 0.1], [0.3, 0.4]], bistable_eq)
    assert v.tag is VerdictTag.VIOLATION and v.witness is not None


def test_antidiagonal_unordered():
    t = np.linspace(-0.5, 0.5, 9)
    v = classify_component(I2, np.stack([t, -t], 1))
    assert v.tag is VerdictTag.UNORDERED and v.margin > 0


def test_cycle_samples_unordered(cycle):
    _, _, pts, _ = cycle
    v = classify_component(I3, pts)
    assert v.tag is VerdictTag.UNORDERED and v.margin > 0


def test_bistable_intersection_audit(bistable_eq):
    rep = intersection_principle_audit(I2, bistable_eq)
    assert rep.clean and rep.pairs_checked == 72
    assert rep.min_pair_margin == pytest.approx(_joint_margin_oracle(bistable_eq), rel=1e-12)
    # frozen: (a, a) and the near-axis root (0.9949, 0.1005) differ by 0.0463 in x1
    assert rep.min_pair_margin == pytest.approx(0.0463, abs=5e-4)
    assert rep.min_pair_margin >= 0.01


def test_intersection_flags_boundary_pair():
    rep = intersection_principle_audit(I2, [[0, 0], [1, 0]])
    assert len(rep.pair_flags) == 2 and not rep.clean


def test_cycle_unordered_against_interior_equilibrium(cycle):
    _, _, pts, p = cycle
    c = pts - p
    assert np.all((c.max(axis=1) > 0) & (c.min(axis=1) < 0))
    assert absorbing_audit(I3, pts, [p]).clean


def test_bistable_limit_sets_related():
    sc = make_scenario("bistable2")
    r = limit_set_dichotomy(I2, sc, [0.9, 0.8], [-0.8, -0.9], T=50.0)
    assert r.relation is LimitSetRelation.APPROX_RELATED


def test_cycle_limit_sets_unordered_union(cycle):
    sc, cr, _, p = cycle
    r = limit_set_dichotomy(I3, sc, cr.z, p, T=100.0)
    assert r.relation is LimitSetRelation.UNORDERED_UNION


def test_connecting_consistency_clean_for_separated_sinks(bistable_eq):
    assert connecting_consistency(I2, [[A, A]], bistable_eq) == []


def test_absorbing_detects_touching_point():
    rep = absorbing_audit(I2, [[0.0, 0.0], [0.5, 1.0]], [[1.0, 1.0]])
    assert not rep.clean


def test_basin_labels_may_leonard(ml_ctx):
    lab = basin_classify(ml_ctx, [0.1, 0.1, 0.1])
    assert lab.kind is BasinKind.UPPER_REPULSION
    np.testing.assert_allclose(ml_ctx.equilibria[lab.equilibrium], 0.0)
    assert basin_classify(ml_ctx, [2.0, 2.0, 2.0]).kind is BasinKind.LOWER_OF_PLUS_INFINITY


def test_cycle_targets(cycle):
    from compdyn.structure import target_equilibrium_for_component
    sc, _, pts, _ = cycle
    ctx = AlphaContext.build(sc)
    lower, upper = target_equilibrium_for_component(ctx, pts)
    assert lower.kind == "equilibrium"
    np.testing.assert_allclose(lower.point, 0.0)
    assert upper.kind == PLUS_INF


def test_mu_on_simplex_ray(ml_ctx):
    tgt = equilibrium_target(ml_ctx, np.zeros(3))
    br = ray_bracket(ml_ctx.scenario.domain_lo, ml_ctx.scenario.domain_hi, np.zeros(3), DIAG3)
    mu = mu_on_ray(ml_ctx, np.zeros(3), DIAG3, tgt, Side.UPPER, br, tol=1e-6)
    assert mu == pytest.approx(math.sqrt(3) / 2, abs=1e-5)


def test_mu_on_bistable_ray(bistable_ctx):
    v = np.ones(2) / math.sqrt(2)
    mu = mu_on_ray(bistable_ctx, np.zeros(2), v, Target(PLUS_INF), Side.LOWER, (0.05, 2.0), tol=1e-6)
    assert mu == pytest.approx(A * math.sqrt(2), abs=1e-4)


def test_hyperplane_basis_orthonormal():
    B = hyperplane_basis(DIAG3)
    np.testing.assert_allclose(B @ B.T, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(B @ DIAG3, 0.0, atol=1e-12)


@pytest.fixture(scope="module")
def simplex_cell(ml_ctx):
    tgt = equilibrium_target(ml_ctx, np.zeros(3))
    return build_cell(ml_ctx, tgt, Side.UPPER, GridSpec(7, 0.2), tol=1e-5)


def test_simplex_cell_center(simplex_cell):
    assert simplex_cell.usable and simplex_cell.missing_fraction == 0.0
    assert simplex_cell.heights[3, 3] == pytest.approx(math.sqrt(3) / 2, abs=1e-4)


def test_simplex_cell_audit(simplex_cell, ml_ctx):
    rep = cell_audit(simplex_cell, ml_ctx, samples=10)
    assert rep.applicable and rep.unorder_margin > 0
    assert rep.invariance_error < 1e-3 and rep.closure_ok


def test_simplex_cell_contains_interior_equilibrium(simplex_cell, ml_ctx):
    rep = containment_check([[0.5, 0.5, 0.5]], simplex_cell, ml_ctx, exact=True)
    assert rep.max_deviation < 1e-4
    assert containment_check([[0.5, 0.5, 0.5]], simplex_cell).max_deviation < 1e-4


def test_disjointness_of_shifted_patch(simplex_cell):
    other = CellPatch(simplex_cell.target, simplex_cell.side, simplex_cell.v,
                      simplex_cell.origin, simplex_cell.basis, simplex_cell.axes,
                      simplex_cell.heights + 0.01, simplex_cell.tol, True)
    rep = cells_disjoint(simplex_cell, other)
    assert rep.comparable and rep.disjoint
    assert rep.separation == pytest.approx(0.01)
    assert not cells_disjoint(simplex_cell, simplex_cell).disjoint


def test_cell_csv_round_trip(simplex_cell, tmp_path):
    path = tmp_path / "cell.csv"
    simplex_cell.to_csv(path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert len(rows) == simplex_cell.heights.size
    np.testing.assert_allclose(np.sort(rows[:, -2]), np.sort(simplex_cell.heights.ravel()))


def test_top_sink_b2_evidence(bistable_ctx):
    ev = classify_B1_B2(bistable_ctx, [[A, A]])
    assert ev.b2 > 0 and ev.dominant == "B2"


def test_cycle_occupation_ring(cycle):
    sc, cr, _, _ = cycle
    occ = occupation_support(sc, cr.z, 150.0, 20.0, 5)
    assert 0 < len(occ.cover.active) < 0.05 * occ.cover.total
    assert occ.fractions.sum() == pytest.approx(1.0)
    v = classify_component(I3, occ.centroids, resolution=float(occ.cover.width.max()))
    assert v.tag is VerdictTag.UNORDERED


def test_box_layer_flags_center_on_boundary_only():
    from compdyn.recurrence import BoxCover
    cover = BoxCover.full([-1, -1], [1, 1], 3)  # width 0.25
    x = np.array([[0.125, 0.125]])
    own = [cover.locate(x)]
    rep = intersection_principle_audit(I2, x, cover, shell=0.01, exclude=own)
    # centers sharing a coordinate with x sit on its cone boundary, the rest are clear by 0.25
    hits = {tuple(f.other) for f in rep.box_flags}
    assert hits == {tuple(c) for c in cover.centers()
                    if (c[0] == 0.125 or c[1] == 0.125) and not np.allclose(c, x[0])}
    assert len(hits) == 14
    assert max(f.margin for f in rep.box_flags) == 0.0
