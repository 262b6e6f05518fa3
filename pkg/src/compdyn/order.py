"""Cone orders, joint cone-boundary classification and set metrics.

A simplicial cone C+ is the image of the nonnegative orthant under an
invertible generator matrix G.  Every order predicate then reduces to sign
checks on the transformed coordinates ``G^{-1} d``.  The rank-one double cone
C = C+ U (-C+) and its complementary cone K split any difference vector into
Int C, Int K and their common boundary (the joint cone-boundary).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree


class Region(enum.Enum):
    INTERIOR_C_PLUS = "InteriorCPlus"
    INTERIOR_C_MINUS = "InteriorCMinus"
    INTERIOR_K = "InteriorK"
    JOINT_BOUNDARY = "JointBoundary"
    ZERO = "Zero"

    @property
    def ordered(self) -> bool:
        return self in (Region.INTERIOR_C_PLUS, Region.INTERIOR_C_MINUS)


class Relation(enum.Enum):
    EQUAL = "Equal"
    LEQ = "Leq"
    GEQ = "Geq"
    STRICTLY_BELOW = "StrictlyBelow"
    STRICTLY_ABOVE = "StrictlyAbove"
    UNORDERED = "Unordered"
    MARGINAL = "Marginal"


@dataclass(frozen=True)
class OrderRegion:
    tag: Region
    margin: float


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """Simplicial cone generated by the columns of ``generators``."""

    generators: np.ndarray
    strict_margin: float = 1e-9
    inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = np.array(self.generators, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] == 0:
            raise ValueError(f"cone generators must be a square matrix, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("cone generators must be finite")
        if self.strict_margin < 0:
            raise ValueError("strict_margin must be nonnegative")
        try:
            inv = np.linalg.inv(g)
        except np.linalg.LinAlgError as exc:
            raise ValueError("cone generator matrix is singular") from exc
        if np.abs(g @ inv - np.eye(len(g))).max() >= 1e-10:
            raise ValueError("cone generator matrix is numerically singular")
        g.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "generators", g)
        object.__setattr__(self, "inverse", inv)

    @classmethod
    def identity(cls, n: int, strict_margin: float = 1e-9) -> "ConeSpec":
        return cls(np.eye(n), strict_margin)

    @property
    def dimension(self) -> int:
        return self.generators.shape[0]

    @property
    def is_orthant(self) -> bool:
        return bool(np.array_equal(self.generators, np.eye(self.dimension)))

    @property
    def direction(self) -> np.ndarray:
        """Canonical unit vector v >> 0, the normalized image of (1, ..., 1)."""
        v = self.generators @ np.ones(self.dimension)
        return v / np.linalg.norm(v)

    def transform(self, x) -> np.ndarray:
        """Coordinates with respect to the generators; works row-wise on 2-D input."""
        x = np.asarray(x, dtype=float)
        return x @ self.inverse.T

    def untransform(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        return c @ self.generators.T

    def __eq__(self, other):
        if not isinstance(other, ConeSpec):
            return NotImplemented
        return (np.array_equal(self.generators, other.generators)
                and self.strict_margin == other.strict_margin)

    def __hash__(self):
        return hash((self.generators.tobytes(), self.strict_margin))


def _classify_transformed(c: np.ndarray, eta: float) -> OrderRegion:
    pos = float(np.max(c))
    neg = float(np.max(-c))
    if max(pos, neg) <= eta:
        return OrderRegion(Region.ZERO, 0.0)
    lo, hi = float(np.min(c)), float(np.max(c))
    if lo > eta:
        return OrderRegion(Region.INTERIOR_C_PLUS, lo)
    if hi < -eta:
        return OrderRegion(Region.INTERIOR_C_MINUS, -hi)
    if pos > eta and neg > eta:
        return OrderRegion(Region.INTERIOR_K, min(pos, neg))
    return OrderRegion(Region.JOINT_BOUNDARY, 0.0)


def classify_difference(cone: ConeSpec, d) -> OrderRegion:
    """Locate ``d`` in Int C+, Int C-, Int K, the joint boundary, or at zero."""
    d = np.asarray(d, dtype=float)
    if d.shape != (cone.dimension,):
        raise ValueError(f"expected a vector of length {cone.dimension}, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError("difference vector must be finite")
    return _classify_transformed(cone.transform(d), cone.strict_margin)


def region_margins(cone: ConeSpec, d: np.ndarray):
    """Vectorized classification of the rows of ``d``.

    Returns ``(tags, margins)`` where tags is an integer array with
    0 = Zero, 1 = Int C+, -1 = Int C-, 2 = Int K, 3 = joint boundary.
    """
    c = cone.transform(np.atleast_2d(d))
    eta = cone.strict_margin
    pos = c.max(axis=1)
    neg = (-c).max(axis=1)
    lo = c.min(axis=1)
    hi = c.max(axis=1)
    tags = np.full(len(c), 3, dtype=int)
    margins = np.zeros(len(c))
    k = (pos > eta) & (neg > eta)
    tags[k] = 2
    margins[k] = np.minimum(pos, neg)[k]
    cp = lo > eta
    tags[cp] = 1
    margins[cp] = lo[cp]
    cm = hi < -eta
    tags[cm] = -1
    margins[cm] = -hi[cm]
    zero = np.maximum(pos, neg) <= eta
    tags[zero] = 0
    margins[zero] = 0.0
    return tags, margins


def order_relate(cone: ConeSpec, x, y) -> Relation:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    c = cone.transform(y - x)
    eta = cone.strict_margin
    region = _classify_transformed(c, eta)
    if region.tag is Region.ZERO:
        return Relation.EQUAL
    if region.tag is Region.INTERIOR_C_PLUS:
        return Relation.STRICTLY_BELOW
    if region.tag is Region.INTERIOR_C_MINUS:
        return Relation.STRICTLY_ABOVE
    if region.tag is Region.INTERIOR_K:
        return Relation.UNORDERED
    # joint boundary: the clear coordinates share one sign, the rest sit within eta of 0
    small = np.abs(c) <= eta
    sign = 1.0 if c[~small].max(initial=0.0) > 0 else -1.0
    if np.all(sign * c[small] >= 0.0):
        return Relation.LEQ if sign > 0 else Relation.GEQ
    return Relation.MARGINAL


def cone_leq(cone: ConeSpec, x, y, tol: float = 0.0) -> bool:
    """x <= y, i.e. every transformed coordinate of y - x is >= -tol."""
    c = cone.transform(np.asarray(y, dtype=float) - np.asarray(x, dtype=float))
    return bool(np.all(c >= -tol))


def _pairs(m: int):
    i, j = np.triu_indices(m, k=1)
    return i, j


@dataclass
class UnorderedVerdict:
    unordered: bool
    min_margin: float
    witness: Optional[tuple] = None

    def __bool__(self):
        return self.unordered


def is_unordered_set(cone: ConeSpec, points, margin: float = 0.0,
                     skip_closer_than: float = 0.0) -> UnorderedVerdict:
    """Check that every distinct pair lies in Int K with at least ``margin``.

    Pairs closer (Euclidean) than ``skip_closer_than`` are ignored; this is how
    callers discount pairs below their spatial resolution.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) < 1:
        raise ValueError("point set must be nonempty")
    if len(pts) == 1:
        return UnorderedVerdict(True, float("inf"))
    i, j = _pairs(len(pts))
    d = pts[j] - pts[i]
    if skip_closer_than > 0:
        keep = np.linalg.norm(d, axis=1) >= skip_closer_than
        i, j, d = i[keep], j[keep], d[keep]
        if len(d) == 0:
            return UnorderedVerdict(True, float("inf"))
    tags, margins = region_margins(cone, d)
    ok = (tags == 2) & (margins >= margin)
    kmargins = np.where(tags == 2, margins, 0.0)
    min_margin = float(kmargins.min())
    if ok.all():
        return UnorderedVerdict(True, min_margin)
    bad = int(np.argmin(ok))
    return UnorderedVerdict(False, min_margin, (pts[i[bad]].copy(), pts[j[bad]].copy()))


@dataclass
class ChainResult:
    ok: bool
    projections: Optional[np.ndarray] = None
    order: Optional[np.ndarray] = None
    witness: Optional[tuple] = None


def order_parameterize(cone: ConeSpec, points, v: Optional[np.ndarray] = None) -> ChainResult:
    """Project a strongly ordered set onto the line spanned by ``v``.

    On success the projections are sorted increasingly; ``order`` gives the
    permutation of the input points.  The chain is certified by strict
    monotonicity of the sorted projections.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) < 2:
        raise ValueError("need at least two points")
    v = cone.direction if v is None else np.asarray(v, dtype=float)
    i, j = _pairs(len(pts))
    tags, _ = region_margins(cone, pts[j] - pts[i])
    ordered = (tags == 1) | (tags == -1)
    if not ordered.all():
        bad = int(np.argmin(ordered))
        return ChainResult(False, witness=(pts[i[bad]].copy(), pts[j[bad]].copy()))
    s = pts @ v
    order = np.argsort(s, kind="stable")
    s_sorted = s[order]
    if np.any(np.diff(s_sorted) <= 0):
        k = int(np.argmin(np.diff(s_sorted) > 0))
        return ChainResult(False, witness=(pts[order[k]].copy(), pts[order[k + 1]].copy()))
    return ChainResult(True, s_sorted, order)


def sup_points(cone: ConeSpec, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        raise ValueError("point set must be nonempty")
    return cone.untransform(cone.transform(pts).max(axis=0))


def inf_points(cone: ConeSpec, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        raise ValueError("point set must be nonempty")
    return cone.untransform(cone.transform(pts).min(axis=0))


def _as_set(a: Sequence) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.size == 0:
        raise ValueError("point set must be nonempty")
    return arr


def hausdorff(a, b) -> float:
    """Euclidean Hausdorff distance between two finite point sets."""
    a, b = _as_set(a), _as_set(b)
    dab, _ = cKDTree(b).query(a)
    dba, _ = cKDTree(a).query(b)
    return float(max(dab.max(), dba.max()))


def separation_index(a, b) -> float:
    """Smallest Euclidean distance between a point of ``a`` and a point of ``b``."""
    a, b = _as_set(a), _as_set(b)
    d, _ = cKDTree(b).query(a)
    return float(d.min())


def parse_cone(spec, n: int, strict_margin: float = 1e-9) -> ConeSpec:
    """Build a cone from the config form: ``"identity"`` or a row-major matrix."""
    if isinstance(spec, str):
        if spec.strip().lower() == "identity":
            return ConeSpec.identity(n, strict_margin)
        raise ValueError(f"unknown cone shorthand {spec!r}")
    g = np.asarray(spec, dtype=float)
    if g.ndim == 1 and g.size == n * n:
        g = g.reshape(n, n)
    if g.shape != (n, n):
        raise ValueError(f"cone matrix must be {n}x{n}, got shape {g.shape}")
    return ConeSpec(g, strict_margin)
