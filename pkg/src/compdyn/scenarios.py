"""Built-in strongly competitive vector fields and the scenario registry."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

KINDS = ("linear", "bistable", "lotka_volterra", "may_leonard", "custom")


def may_leonard_matrix(alpha: float, beta: float) -> np.ndarray:
    return np.array([[1.0, alpha, beta], [beta, 1.0, alpha], [alpha, beta, 1.0]])


# From scripts/scan_limit_cycle.py: permanent (boundary repels) with an unstable
# interior focus, so the carrying simplex holds an attracting periodic orbit
# (period ~14.55, every coordinate stays above 0.06).
LV3_CYCLE_R = [2.3, 2.9, 1.7]
LV3_CYCLE_A = [[1.0, 0.1, 1.404], [2.6, 1.0, 1.3], [0.1, 1.6, 1.0]]


@dataclass(frozen=True, eq=False)
class Scenario:
    """A named, parameterized vector field with the box on which it is defined and competitive."""

    name: str
    kind: str
    dimension: int
    params: Dict[str, object]
    domain_lo: np.ndarray
    domain_hi: np.ndarray
    escape_radius: float = 0.0
    custom_field: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        lo = np.asarray(self.domain_lo, dtype=float)
        hi = np.asarray(self.domain_hi, dtype=float)
        if lo.shape != (self.dimension,) or hi.shape != (self.dimension,):
            raise ValueError("valid_domain bounds must match the dimension")
        if np.any(hi <= lo):
            raise ValueError("valid_domain must have positive width on every axis")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "domain_lo", lo)
        object.__setattr__(self, "domain_hi", hi)
        if self.escape_radius <= 0:
            object.__setattr__(self, "escape_radius", 1e3 * self.domain_diameter)
        self._prepare()

    # ---- parameter unpacking -------------------------------------------------
    def _prepare(self):
        p = self.params
        n = self.dimension
        if self.kind == "linear":
            A = np.asarray(p["A"], dtype=float)
            if A.shape != (n, n):
                raise ValueError("linear scenario needs an n x n matrix A")
            object.__setattr__(self, "_A", A)
        elif self.kind == "bistable":
            k = float(p["k"])
            if not (0 < k < 1 / max(n - 1, 1)):
                raise ValueError("bistable coupling must satisfy 0 < k < 1/(n-1)")
            object.__setattr__(self, "_k", k)
        elif self.kind in ("lotka_volterra", "may_leonard"):
            if self.kind == "may_leonard":
                if n != 3:
                    raise ValueError("may_leonard is three dimensional")
                A = may_leonard_matrix(float(p["alpha"]), float(p["beta"]))
                r = np.ones(3)
            else:
                A = np.asarray(p["A"], dtype=float)
                r = np.asarray(p["r"], dtype=float)
            if A.shape != (n, n) or r.shape != (n,):
                raise ValueError("lotka_volterra needs r of length n and an n x n matrix A")
            if np.any(A <= 0) or np.any(r <= 0):
                raise ValueError("lotka_volterra needs positive r and positive interactions")
            if np.any(self.domain_lo <= 0):
                raise ValueError("Kolmogorov scenarios need a valid_domain in the open orthant")
            object.__setattr__(self, "_A", A)
            object.__setattr__(self, "_r", r)
        elif self.kind == "custom":
            if self.custom_field is None:
                raise ValueError("custom scenario needs a field callable")

    # ---- geometry --------------------------------------------------------------
    @property
    def domain_diameter(self) -> float:
        return float(np.linalg.norm(self.domain_hi - self.domain_lo))

    @property
    def domain_center(self) -> np.ndarray:
        return 0.5 * (self.domain_lo + self.domain_hi)

    def in_domain(self, x, pad: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= self.domain_lo - pad) & (x <= self.domain_hi + pad), axis=1)

    @property
    def is_kolmogorov(self) -> bool:
        return self.kind in ("lotka_volterra", "may_leonard")

    @property
    def interaction(self) -> np.ndarray:
        return self._A

    @property
    def growth(self) -> np.ndarray:
        return self._r

    # ---- field and Jacobian ----------------------------------------------------
    def field(self, x: np.ndarray) -> np.ndarray:
        """Vector field evaluated row-wise on an (m, n) array."""
        if self.kind == "linear":
            return x @ self._A.T
        if self.kind == "bistable":
            total = x.sum(axis=1, keepdims=True)
            return x - x ** 3 - self._k * (total - x)
        if self.kind in ("lotka_volterra", "may_leonard"):
            return x * (self._r - x @ self._A.T)
        return np.asarray(self.custom_field(x), dtype=float)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.field(x[None, :])[0]
        return self.field(x)

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = self.dimension
        if self.kind == "linear":
            return self._A.copy()
        if self.kind == "bistable":
            J = -self._k * (np.ones((n, n)) - np.eye(n))
            J[np.diag_indices(n)] = 1.0 - 3.0 * x ** 2
            return J
        if self.kind in ("lotka_volterra", "may_leonard"):
            return np.diag(self._r - self._A @ x) - x[:, None] * self._A
        # central differences, step ~ cbrt(eps) * scale
        h = np.cbrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(x))
        pts = np.concatenate([x + np.diag(h), x - np.diag(h)])
        vals = self.field(pts)
        return ((vals[:n] - vals[n:]) / (2 * h[:, None])).T

    def exact_equilibria(self) -> Optional[np.ndarray]:
        """All equilibria in the closed orthant for Kolmogorov fields, else None.

        Enumerates supports S and solves A_SS x_S = r_S; independent of Newton.
        """
        if not self.is_kolmogorov:
            return None
        n = self.dimension
        out = [np.zeros(n)]
        for size in range(1, n + 1):
            for S in itertools.combinations(range(n), size):
                S = list(S)
                try:
                    xs = np.linalg.solve(self._A[np.ix_(S, S)], self._r[S])
                except np.linalg.LinAlgError:
                    continue
                if np.all(xs > 0):
                    x = np.zeros(n)
                    x[S] = xs
                    out.append(x)
        return np.array(out)


def _box(lo, hi, n):
    return np.full(n, float(lo)), np.full(n, float(hi))


def make_scenario(name: str, params: Optional[dict] = None, domain=None,
                  escape_radius: float = 0.0) -> Scenario:
    """Instantiate a registered scenario, optionally overriding params/domain."""
    if name not in REGISTRY:
        raise KeyError(f"unknown scenario {name!r}; known: {sorted(REGISTRY)}")
    kind, n, base, default_domain = REGISTRY[name]
    merged = dict(base)
    if params:
        unknown = set(params) - set(base)
        if unknown:
            raise KeyError(f"unknown parameters for {name}: {sorted(unknown)}")
        merged.update(params)
    if kind == "bistable":
        n = int(merged.get("n", n))
    lo, hi = default_domain(n) if domain is None else (np.asarray(domain[0], float),
                                                       np.asarray(domain[1], float))
    return Scenario(name, kind, n, merged, lo, hi, escape_radius)


def custom_scenario(name: str, fn: Callable, dimension: int, lo, hi) -> Scenario:
    return Scenario(name, "custom", dimension, {}, np.asarray(lo, float),
                    np.asarray(hi, float), 0.0, fn)


REGISTRY = {
    "linear2": ("linear", 2, {"A": [[-2.0, -1.0], [-1.0, -2.0]]}, lambda n: _box(-1, 1, n)),
    "bistable2": ("bistable", 2, {"n": 2, "k": 0.1}, lambda n: _box(-1.5, 1.5, n)),
    "bistable3": ("bistable", 3, {"n": 3, "k": 0.1}, lambda n: _box(-1.5, 1.5, n)),
    "lv2": ("lotka_volterra", 2, {"r": [1.0, 1.0], "A": [[1.0, 0.5], [0.5, 1.0]]},
            lambda n: _box(0.05, 1.5, n)),
    "may_leonard": ("may_leonard", 3, {"alpha": 0.5, "beta": 0.5}, lambda n: _box(0.05, 1.5, n)),
    "lv3_cycle": ("lotka_volterra", 3, {"r": LV3_CYCLE_R, "A": LV3_CYCLE_A},
                  lambda n: _box(0.02, 3.0, n)),
}
