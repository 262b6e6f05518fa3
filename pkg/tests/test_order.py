import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compdyn.order import (ConeSpec, Region, Relation, classify_difference, cone_leq, hausdorff,
                           inf_points, is_unordered_set, order_parameterize, order_relate,
                           parse_cone, region_margins, separation_index, sup_points)

SHEAR = ConeSpec(np.array([[1.0, 0.0], [1.0, 1.0]]))
A = math.sqrt(0.9)  # bistable diagonal sink coordinate, a^2 = 1 - k with k = 0.1

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec3 = st.lists(finite, min_size=3, max_size=3).map(np.array)


def test_shear_cone_interior_plus():
    # G^{-1} (1, 2) = (1, 1)
    r = classify_difference(SHEAR, [1.0, 2.0])
    assert r.tag is Region.INTERIOR_C_PLUS
    assert r.margin == pytest.approx(1.0)


@pytest.mark.parametrize("d,tag", [
    ([1.0, -1.0], Region.INTERIOR_K),
    ([-1.0, -2.0], Region.INTERIOR_C_MINUS),
    ([1.0, 1.0], Region.JOINT_BOUNDARY),
    ([0.0, 0.0], Region.ZERO),
])
def test_shear_cone_regions(d, tag):
    assert classify_difference(SHEAR, d).tag is tag


def test_region_margins_matches_scalar():
    rng = np.random.default_rng(3)
    d = rng.normal(size=(200, 2))
    d[:5] = [[0, 0], [1, 1], [1, 2], [-1, -2], [1, -1]]
    tags, margins = region_margins(SHEAR, d)
    code = {Region.ZERO: 0, Region.INTERIOR_C_PLUS: 1, Region.INTERIOR_C_MINUS: -1,
            Region.INTERIOR_K: 2, Region.JOINT_BOUNDARY: 3}
    for row, t, m in zip(d, tags, margins):
        r = classify_difference(SHEAR, row)
        assert code[r.tag] == t
        assert r.margin == pytest.approx(m)


def test_order_relate_cases():
    I2 = ConeSpec.identity(2)
    assert order_relate(I2, [0, 0], [1, 1]) is Relation.STRICTLY_BELOW
    assert order_relate(I2, [1, 1], [0, 0]) is Relation.STRICTLY_ABOVE
    assert order_relate(I2, [0, 0], [1, 0]) is Relation.LEQ
    assert order_relate(I2, [1, 0], [0, 0]) is Relation.GEQ
    assert order_relate(I2, [0, 0], [1, -1]) is Relation.UNORDERED
    assert order_relate(I2, [0, 0], [0, 0]) is Relation.EQUAL


def test_bistable_diagonal_chain():
    cone = ConeSpec.identity(2)
    pts = np.array([[A, A], [-A, -A], [0, 0]])
    res = order_parameterize(cone, pts)
    assert res.ok
    assert list(res.order) == [1, 2, 0]
    assert np.all(np.diff(res.projections) > 0)


def test_chain_rejects_unordered_pair():
    res = order_parameterize(ConeSpec.identity(2), [[0, 0], [1, -1]])
    assert not res.ok and res.witness is not None


def test_sup_inf_shear():
    S = [[1.0, 1.0], [0.0, 1.0]]
    np.testing.assert_allclose(sup_points(SHEAR, S), [1.0, 2.0])
    np.testing.assert_allclose(inf_points(SHEAR, S), [0.0, 0.0])


def test_unordered_antidiagonal():
    t = np.linspace(-1, 1, 11)
    pts = np.stack([t, -t], axis=1)
    v = is_unordered_set(ConeSpec.identity(2), pts)
    assert v.unordered and v.min_margin == pytest.approx(0.2)
    v = is_unordered_set(ConeSpec.identity(2), np.vstack([pts, [[2, 2]]]))
    assert not v.unordered


def test_parse_cone_forms():
    assert parse_cone("identity", 3).is_orthant
    assert parse_cone([1, 0, 1, 1], 2) == SHEAR
    with pytest.raises(ValueError):
        parse_cone([[1, 1], [1, 1]], 2)
    with pytest.raises(ValueError):
        parse_cone([[1, 0, 0]], 2)
    with pytest.raises(ValueError):
        parse_cone("orthant", 2)


def test_direction_is_positive_unit():
    v = SHEAR.direction
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert classify_difference(SHEAR, v).tag is Region.INTERIOR_C_PLUS


@settings(max_examples=200, deadline=None)
@given(vec3, vec3)
def test_relation_antisymmetry(x, y):
    cone = ConeSpec(np.array([[1.0, 0.2, 0.0], [0.0, 1.0, 0.3], [0.1, 0.0, 1.0]]))
    flip = {Relation.STRICTLY_BELOW: Relation.STRICTLY_ABOVE, Relation.LEQ: Relation.GEQ,
            Relation.EQUAL: Relation.EQUAL, Relation.UNORDERED: Relation.UNORDERED,
            Relation.MARGINAL: Relation.MARGINAL}
    flip.update({b: a for a, b in list(flip.items())})
    assert order_relate(cone, y, x) is flip[order_relate(cone, x, y)]


@settings(max_examples=200, deadline=None)
@given(vec3, vec3, vec3)
def test_strict_order_transitive(x, y, z):
    cone = ConeSpec.identity(3)
    below = Relation.STRICTLY_BELOW
    if order_relate(cone, x, y) is below and order_relate(cone, y, z) is below:
        assert order_relate(cone, x, z) is below


@settings(max_examples=100, deadline=None)
@given(st.lists(vec3, min_size=1, max_size=8), vec3)
def test_sup_dominates_and_translates(points, shift):
    cone = ConeSpec.identity(3)
    pts = np.array(points)
    s = sup_points(cone, pts)
    assert np.all(cone.transform(s - pts) >= -1e-12)
    np.testing.assert_allclose(sup_points(cone, pts + shift), s + shift, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(vec3, min_size=1, max_size=6), st.lists(vec3, min_size=1, max_size=6))
def test_hausdorff_metric_properties(a, b):
    a, b = np.array(a), np.array(b)
    h = hausdorff(a, b)
    assert h == pytest.approx(hausdorff(b, a))
    assert hausdorff(a, a) == 0.0
    assert separation_index(a, b) <= h + 1e-12


def test_boundary_roundoff_is_marginal_but_leq_within_tolerance():
    G = np.array([[1.0, 0.3], [0.2, 1.0]])
    cone = ConeSpec(G)
    x = np.array([0.1, 0.7])
    y = x + G @ np.array([0.4, 0.0])
    assert order_relate(cone, x, y) in (Relation.LEQ, Relation.MARGINAL)
    assert cone_leq(cone, x, y, 1e-12)
    assert not cone_leq(cone, y, x, 1e-12)
