"""(T, eps)-spanning counts and the growth-rate estimate of topological entropy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .flow import dense_batch
from .integrate import COMPLETED, IntegratorConfig
from .scenarios import Scenario

ZERO_TOLERANCE = 0.05  # nats per unit time


def lexicographic(points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return pts[np.lexsort(pts.T[::-1])]


@dataclass
class SampledOrbits:
    """Orbits of sorted base points on a uniform time grid, shape (m, steps, n)."""

    base: np.ndarray
    times: np.ndarray
    states: np.ndarray


def sample_orbits(scenario: Scenario, base, T: float, eps: float,
                  cfg: Optional[IntegratorConfig] = None) -> SampledOrbits:
    """Sample at dt = eps / (2 * max speed) so tubes cannot be crossed between samples."""
    base = lexicographic(base)
    r = dense_batch(scenario, base, T, cfg)
    bad = np.flatnonzero(r.status != COMPLETED)
    if len(bad):
        raise RuntimeError(f"base point {base[bad[0]].tolist()} escaped before T={T}")
    nodes = r.dense.y.reshape(-1, base.shape[1])
    speed = float(np.abs(scenario(nodes)).max()) if len(nodes) else 0.0
    dt = eps / (2 * speed) if speed > 0 else T
    steps = max(2, int(math.ceil(T / dt)) + 1)
    ts = np.linspace(0.0, T, steps)
    states = np.transpose(r.dense(ts), (1, 0, 2))
    return SampledOrbits(base, ts, states)


def greedy_centers(orbits: np.ndarray, eps: float, seeds: Sequence[int] = ()) -> List[int]:
    """Greedy cover in index order; ``seeds`` are taken as centers first."""
    m = len(orbits)
    covered = np.zeros(m, dtype=bool)
    centers: List[int] = []

    def take(i):
        centers.append(i)
        rest = np.flatnonzero(~covered)
        gap = np.abs(orbits[rest] - orbits[i]).max(axis=(1, 2))
        covered[rest[gap <= eps]] = True

    for i in sorted(set(int(s) for s in seeds)):
        take(i)
    for i in range(m):
        if not covered[i]:
            take(i)
    return centers


def spanning_count(scenario: Scenario, base, T: float, eps: float,
                   cfg: Optional[IntegratorConfig] = None) -> int:
    if eps <= 0 or T < 0:
        raise ValueError("need eps > 0 and T >= 0")
    if len(np.atleast_2d(base)) == 0:
        return 0
    s = sample_orbits(scenario, base, T, eps, cfg)
    return len(greedy_centers(s.states, eps))


def ls_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    return float((xc * (y - y.mean())).sum() / (xc * xc).sum())


@dataclass
class EntropyReport:
    epsilons: List[float]
    horizons: List[float]
    counts: np.ndarray  # (len(epsilons), len(horizons))
    slopes: List[float]
    headline: float
    degenerate: bool = False
    monotone: bool = True
    tolerance: float = ZERO_TOLERANCE

    @property
    def zero_entropy(self) -> bool:
        return self.headline <= self.tolerance

    def verdict(self) -> str:
        word = "zero" if self.zero_entropy else "positive"
        extra = " degenerate" if self.degenerate else ""
        return (f"entropy {word}: headline slope {self.headline:.6g} nats/time "
                f"(tolerance {self.tolerance:g}, monotone={self.monotone}{extra})")

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("eps," + ",".join(f"T={t:g}" for t in self.horizons) + ",slope\n")
            for e, row, s in zip(self.epsilons, self.counts, self.slopes):
                fh.write(f"{e!r}," + ",".join(str(int(c)) for c in row) + f",{s!r}\n")


def entropy_estimate(scenario: Scenario, samples, horizons: Sequence[float],
                     epsilons: Sequence[float], cfg: Optional[IntegratorConfig] = None) -> EntropyReport:
    """Slopes of log N(T, eps) in T for an invariant set given by ``samples``.

    Each (T, eps) cover starts from the centers chosen for the previous T and
    the previous (larger) eps, which makes the counts monotone by construction.
    """
    Ts = sorted(float(t) for t in horizons)
    Es = sorted((float(e) for e in epsilons), reverse=True)
    if len(Ts) < 3 or len(Es) < 2:
        raise ValueError("need at least 3 horizons and 2 epsilons")
    base = np.atleast_2d(np.asarray(samples, dtype=float))
    counts = np.zeros((len(Es), len(Ts)), dtype=int)
    if len(base) == 0 or base.size == 0:
        return EntropyReport(Es, Ts, counts, [0.0] * len(Es), 0.0, degenerate=True)
    # one orbit sampling per horizon at the finest epsilon serves every epsilon
    orbits = [sample_orbits(scenario, base, T, min(Es), cfg).states for T in Ts]
    chosen = {}
    for j, T in enumerate(Ts):
        for i, e in enumerate(Es):
            seeds = set(chosen.get((i, j - 1), ())) | set(chosen.get((i - 1, j), ()))
            chosen[(i, j)] = greedy_centers(orbits[j], e, seeds)
            counts[i, j] = len(chosen[(i, j)])
    logs = np.log(counts)
    slopes = [ls_slope(Ts, row) for row in logs]
    monotone = bool(np.all(np.diff(counts, axis=1) >= 0) and np.all(np.diff(counts, axis=0) >= 0))
    return EntropyReport(Es, Ts, counts, slopes, float(max(slopes)), False, monotone)
