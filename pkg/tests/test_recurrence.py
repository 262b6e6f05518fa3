import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compdyn.flow import equilibrium_set
from compdyn.recurrence import (BoxCover, box_map, chain_recurrent, ip_generate, ip_verify,
                                item_rng, recurrent_times, refine_close_return,
                                spatial_components, subdivide_iterate, subset_sums, verify_A1)
from compdyn.scenarios import custom_scenario, make_scenario

P = 2 * math.pi
ROT = custom_scenario("rotation", lambda x: np.stack([-x[:, 1], x[:, 0]], axis=1), 2,
                      [-2, -2], [2, 2])
Z = np.array([1.0, 0.0])
A = math.sqrt(0.9)


@pytest.fixture(scope="module")
def bistable_cover():
    return subdivide_iterate(make_scenario("bistable2"), depth_schedule=(2, 4, 6)).cover


def test_item_rng_independent_of_order():
    a = item_rng(7, 3).random(4)
    item_rng(7, 2).random(100)
    np.testing.assert_array_equal(a, item_rng(7, 3).random(4))
    assert not np.array_equal(a, item_rng(7, 4).random(4))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 5), st.lists(st.floats(-0.999, 0.999), min_size=2, max_size=2))
def test_locate_round_trip(depth, x):
    cover = BoxCover.full([-1, -1], [1, 1], depth)
    idx = cover.locate(np.array([x]))
    assert cover.with_active(idx).contains(np.array([x]))[0]
    c = cover.centers(idx)[0]
    assert np.all(np.abs(c - x) <= cover.radius + 1e-12)


def test_subdivide_preserves_union():
    cover = BoxCover.full([0, 0], [1, 1], 2).with_active([0, 5, 15])
    fine = cover.subdivide(2)
    assert len(fine.active) == 3 * 16
    np.testing.assert_array_equal(fine.coarsen(2).active, cover.active)


def test_linear_transitions_contract():
    sc = make_scenario("linear2")
    cover = BoxCover.full(sc.domain_lo, sc.domain_hi, 4)
    g = box_map(cover, sc, T=1.0)
    centers = cover.centers()
    norm = np.abs(centers).max(axis=1)
    origin_boxes = set(cover.locate(np.array([[1e-9, 1e-9]])).tolist())
    for i, src in enumerate(cover.active):
        succ = g.successors(i)
        assert norm[np.searchsorted(cover.active, succ)].min() <= norm[i] + 1e-12
        if src in origin_boxes:
            assert src in succ
    assert not g.exits.any()


def test_sink_box_self_loop():
    sc = make_scenario("bistable2")
    cover = BoxCover.full(sc.domain_lo, sc.domain_hi, 6)
    box = int(cover.locate(np.array([[A, A]]))[0])
    g = box_map(cover.with_active(cover.active), sc, T=1.0)
    i = int(np.searchsorted(cover.active, box))
    assert box in g.successors(i)


def test_linear_localization_depth8():
    sc = make_scenario("linear2")
    cover = subdivide_iterate(sc, depth_schedule=(2, 4, 6, 8)).cover
    assert len(cover.active) > 0
    assert cover.diameter() <= 4 * cover.radius.max() + 1e-12
    assert cover.contains(np.zeros((1, 2)))[0]


def test_bistable_nine_components(bistable_cover):
    comps = spatial_components(bistable_cover)
    eq = equilibrium_set(make_scenario("bistable2"))
    assert len(comps) == 9 == len(eq)
    owners = [[c.label for c in comps if c.contains_point(bistable_cover, p)] for p in eq]
    assert sorted(o[0] for o in owners) == list(range(9))


def test_chain_recurrent_drops_transients(bistable_cover):
    sc = make_scenario("bistable2")
    full = BoxCover.full(sc.domain_lo, sc.domain_hi, 3)
    kept = chain_recurrent(box_map(full, sc))
    assert 0 < len(kept) < len(full.active)


def test_may_leonard_survivors_at_interior_sink():
    cover = subdivide_iterate(make_scenario("may_leonard"), depth_schedule=(2, 4, 6)).cover
    comps = spatial_components(cover)
    hits = [c for c in comps if c.contains_point(cover, np.full(3, 0.5))]
    assert len(hits) == 1


def test_close_return_period():
    cr = refine_close_return(ROT, Z, (1.0, 10.0), 1e-3)
    assert cr is not None
    assert cr.t == pytest.approx(P, abs=1e-6)
    assert cr.error < 1e-6


def test_recurrent_intervals_near_multiples():
    rts = recurrent_times(ROT, Z, 0.05, 30.0, 0.01)
    centers = rts.intervals.mean(axis=1)[1:]
    np.testing.assert_allclose(centers, P * np.arange(1, len(centers) + 1), atol=1e-3)
    # theta = 2 sin(w/2) on the unit circle gives the half width w
    half = 2 * math.asin(0.025)
    np.testing.assert_allclose(np.diff(rts.intervals[1:], axis=1).ravel(), 2 * half, atol=1e-3)
    assert rts.contains([P])[0] and not rts.contains([P / 2])[0]


def test_a1_half_period():
    w = verify_A1(ROT, Z, 0.05, P / 2, 0.1, 100.0)
    assert w.found and w.n == 2
    assert abs(w.s - P) < 0.1 and w.error < 0.05


def test_a1_irrational_ratio():
    tau = math.sqrt(2) * P / 3
    w = verify_A1(ROT, Z, 0.05, tau, 0.05 * P, 1000.0)
    assert w.found and w.n <= math.ceil(P / (0.05 * P) * 4)


def test_a1_rejects_wide_window():
    with pytest.raises(ValueError):
        verify_A1(ROT, Z, 0.05, 1.0, 0.5, 10.0)


def test_subset_sums_enumerate():
    sums, masks = subset_sums([1.0, 2.0, 4.0])
    assert sorted(sums.tolist()) == [1, 2, 3, 4, 5, 6, 7]
    assert len(masks) == 7


def test_ip_generate_periodic():
    ip = ip_generate(ROT, Z, 0.05, 6, 200.0)
    assert len(ip.generators) == 6 and not ip.truncated
    np.testing.assert_allclose(ip.generators, P, atol=1e-3)
    assert ip.worst_error < 0.05
    assert ip_verify(ROT, Z, 0.05, ip.generators).passed


def test_ip_verify_half_period_fails():
    v = ip_verify(ROT, Z, 1e-6, [P / 2])
    assert not v.passed
    assert v.worst_error == pytest.approx(2.0, abs=1e-6)


def test_ip_generate_equilibrium():
    sc = make_scenario("lv2")
    ip = ip_generate(sc, [2 / 3, 2 / 3], 0.05, 10, 1e4)
    assert len(ip.generators) == 10
    assert ip_verify(sc, [2 / 3, 2 / 3], 0.05, ip.generators).passed
