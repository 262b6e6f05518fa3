import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compdyn.flow import (AlphaContext, AlphaKind, FlowStatus, Stability, alpha_limit_classify,
                          attractor_bounds, check_strong_competitiveness, equilibrium_set,
                          find_equilibria, flow_batch, flow_map, semigroup_residual, trajectory)
from compdyn.integrate import COMPLETED, ESCAPED, STOPPED, IntegratorConfig, integrate_batch
from compdyn.scenarios import make_scenario

A = math.sqrt(0.9)


@pytest.fixture(scope="module")
def may_leonard_ctx():
    return AlphaContext.build(make_scenario("may_leonard"))


def test_dopri_exponential_decay():
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)
    x0 = np.array([[1.0], [2.0], [-3.0]])
    r = integrate_batch(lambda y: -y, x0, 2.0, cfg)
    assert np.all(r.status == COMPLETED)
    np.testing.assert_allclose(r.states, x0 * math.exp(-2.0), rtol=1e-8)


def test_dense_and_independent_agree():
    sc = make_scenario("bistable2")
    x0 = np.random.default_rng(0).uniform(-1.4, 1.4, (16, 2))
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)
    a = integrate_batch(sc, x0, 3.0, cfg, dense=True)
    b = integrate_batch(sc, x0, 3.0, cfg)
    np.testing.assert_allclose(a.states, b.states, atol=1e-7)
    np.testing.assert_allclose(a.dense([3.0])[0], a.states, atol=1e-12)


def test_backward_duration_reverses_forward():
    sc = make_scenario("bistable2")
    x = np.array([0.3, -0.2])
    fwd = flow_map(sc, x, 1.5)
    back = flow_map(sc, fwd.point, -1.5)
    assert back.ok
    np.testing.assert_allclose(back.point, x, atol=1e-7)
    assert back.time == pytest.approx(-1.5)


def test_monitor_freezes_points():
    def monitor(t, X, idx):
        return (X[:, 0] < 0.5).astype(int)
    r = integrate_batch(lambda y: -y, [[1.0], [0.2]], 5.0, IntegratorConfig(), monitor=monitor)
    assert list(r.status) == [STOPPED, STOPPED]
    assert r.stop_time[1] < r.stop_time[0] < 5.0


def test_linear_eigenvector_flow():
    sc = make_scenario("linear2", {"A": [[-1.0, -0.5], [-0.5, -1.0]]})
    r = flow_map(sc, [1.0, 1.0], 1.0)
    np.testing.assert_allclose(r.point, math.exp(-1.5) * np.ones(2), rtol=1e-8)


def test_lv_backward_escape():
    r = flow_map(make_scenario("lv2"), [1.5, 1.5], -20.0)
    assert r.status in (FlowStatus.ESCAPED, FlowStatus.BLOWUP_SUSPECTED)
    assert abs(r.time) < 20.0


def test_escape_status_code():
    r = integrate_batch(lambda y: y * y, [[1.0]], 5.0, IntegratorConfig(escape_radius=100.0))
    assert r.status[0] == ESCAPED and r.stop_time[0] < 1.0


def test_semigroup_residual_bistable():
    assert semigroup_residual(make_scenario("bistable2"), [0.3, -0.2], 1.0, 1.0) < 1e-7


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.4, 1.4), st.floats(-1.4, 1.4), st.floats(0.05, 2.0), st.floats(0.05, 2.0))
def test_semigroup_property(x, y, s, t):
    assert semigroup_residual(make_scenario("bistable2"), [x, y], s, t) < 1e-7


def test_trajectory_interpolant_hits_samples():
    sc = make_scenario("lv2")
    tr = trajectory(sc, [0.2, 0.9], 4.0)
    np.testing.assert_allclose(tr(tr.times), tr.states, atol=1e-12)
    np.testing.assert_allclose(tr(4.0), flow_map(sc, [0.2, 0.9], 4.0).point, atol=1e-7)


def test_strong_competitiveness_bistable3():
    rep = check_strong_competitiveness(make_scenario("bistable3", domain=([-2] * 3, [2] * 3)))
    assert rep.max_offdiag == pytest.approx(-0.1)
    assert rep.irreducible and rep.strongly_competitive


def test_strong_competitiveness_may_leonard():
    rep = check_strong_competitiveness(make_scenario("may_leonard"))
    assert rep.max_offdiag <= -0.05 * 0.5 + 1e-12
    assert rep.irreducible


def test_lv2_interior_equilibrium():
    eq = equilibrium_set(make_scenario("lv2"))
    interior = eq[np.all(eq > 0, axis=1)]
    np.testing.assert_allclose(interior, [[2 / 3, 2 / 3]], atol=1e-10)


def test_may_leonard_interior_equilibrium():
    sc = make_scenario("may_leonard")
    np.testing.assert_allclose(sc(np.full(3, 0.5)), 0.0, atol=1e-15)


def test_bistable_census():
    recs = find_equilibria(make_scenario("bistable2"))
    pts = np.array([r.point for r in recs])
    assert len(pts) == 9
    for sink in ([A, A], [-A, -A]):
        assert np.linalg.norm(pts - sink, axis=1).min() < 1e-8
    stab = {tuple(np.round(r.point, 6)): r.stability for r in recs}
    assert stab[(round(A, 6),) * 2] is Stability.ATTRACTING
    assert stab[(0.0, 0.0)] is Stability.REPELLING


def test_attractor_box_may_leonard():
    b = attractor_bounds(make_scenario("may_leonard"))
    assert np.all(b.lo >= 0) and np.all(b.hi <= 1.05)


def test_attractor_box_bistable_contains_sinks():
    b = attractor_bounds(make_scenario("bistable2"))
    assert np.all(b.lo < -A) and np.all(b.hi > A)


def test_alpha_limit_below_simplex(may_leonard_ctx):
    r = alpha_limit_classify(may_leonard_ctx, [0.1, 0.1, 0.1])
    assert r.kind is AlphaKind.CONVERGES_TO
    np.testing.assert_allclose(may_leonard_ctx.equilibria[r.equilibrium], 0.0)
    assert r.side == 1


def test_alpha_limit_above_simplex(may_leonard_ctx):
    r = alpha_limit_classify(may_leonard_ctx, [2.0, 2.0, 2.0])
    assert r.kind is AlphaKind.ESCAPES_ABOVE_X_STAR


def test_forward_batch_statuses():
    states, status, _ = flow_batch(make_scenario("bistable2"), [[0.9, 0.9], [-0.9, -0.9]], 50.0)
    assert np.all(status == COMPLETED)
    np.testing.assert_allclose(states, [[A, A], [-A, -A]], atol=1e-8)
