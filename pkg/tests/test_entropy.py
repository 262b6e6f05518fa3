import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compdyn.entropy import (entropy_estimate, greedy_centers, lexicographic, ls_slope,
                             spanning_count)
from compdyn.scenarios import custom_scenario, make_scenario

ROT = custom_scenario("rotation", lambda x: np.stack([-x[:, 1], x[:, 0]], axis=1), 2,
                      [-2, -2], [2, 2])
RING = np.stack([np.cos(np.linspace(0, 2 * np.pi, 400, endpoint=False)),
                 np.sin(np.linspace(0, 2 * np.pi, 400, endpoint=False))], axis=1)


def test_ring_count_matches_tube_cover():
    eps = 0.1
    n = spanning_count(ROT, RING, 5.0, eps)
    # rotation is a sup-norm near-isometry, so the count is set by the arc length
    ideal = math.ceil(2 * math.pi / (2 * eps))
    assert ideal / 2 <= n <= 2 * ideal


def test_ring_count_flat_in_time():
    counts = [spanning_count(ROT, RING, T, 0.1) for T in (5.0, 10.0, 20.0)]
    assert max(counts) - min(counts) <= 2


def test_equilibrium_control_zero():
    rep = entropy_estimate(make_scenario("lv2"), [[2 / 3, 2 / 3]], [20, 40, 80], [0.05, 0.1])
    assert rep.headline == 0.0
    assert np.all(rep.counts == 1) and rep.zero_entropy


def test_ring_entropy_zero_and_monotone():
    rep = entropy_estimate(ROT, RING[::4], [5, 10, 20], [0.05, 0.1])
    assert rep.monotone and rep.zero_entropy
    assert rep.epsilons == [0.1, 0.05]
    assert np.all(rep.counts[1] >= rep.counts[0])


def test_entropy_needs_grid():
    with pytest.raises(ValueError):
        entropy_estimate(ROT, RING, [5, 10], [0.1, 0.05])


def test_empty_sample_degenerate():
    rep = entropy_estimate(ROT, np.zeros((0, 2)), [5, 10, 20], [0.1, 0.05])
    assert rep.degenerate and rep.headline == 0.0


def test_csv_layout(tmp_path):
    rep = entropy_estimate(ROT, RING[::8], [5, 10, 20], [0.05, 0.1])
    rep.to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "eps,T=5,T=10,T=20,slope"
    assert len(lines) == 3


def test_expanding_map_positive_slope():
    # orbits of x' = x separate at rate 1, so the counts grow like e^T
    sc = custom_scenario("expand", lambda x: x.copy(), 1, [-1], [1])
    rep = entropy_estimate(sc, np.linspace(-0.01, 0.01, 2001)[:, None], [1, 2, 3], [0.005, 0.01])
    assert rep.headline == pytest.approx(1.0, abs=0.15)
    assert not rep.zero_entropy


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=30), st.floats(0.01, 0.5))
def test_greedy_cover_is_spanning(xs, eps):
    orbits = np.array(xs)[:, None, None]
    centers = greedy_centers(orbits, eps)
    gaps = np.abs(orbits[:, None] - orbits[centers][None]).max(axis=(2, 3))
    assert np.all(gaps.min(axis=1) <= eps)
    # centers are pairwise eps-separated when no seeds are given
    sub = gaps[centers]
    np.fill_diagonal(sub, np.inf)
    assert np.all(sub > eps)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_ls_slope_exact_on_lines(a, b):
    x = np.array([1.0, 2.0, 4.0])
    assert ls_slope(x, a * x + b) == pytest.approx(a, abs=1e-9)


def test_lexicographic_order():
    np.testing.assert_array_equal(lexicographic([[1, 0], [0, 2], [0, 1]]), [[0, 1], [0, 2], [1, 0]])
