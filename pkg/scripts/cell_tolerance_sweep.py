"""Carrying-simplex cell of may_leonard(0.5, 0.5) at several bisection tolerances.

Prints the center height error against sqrt(3)/2, the audit numbers and the
build time for each tolerance, so the default tolerance can be judged.

    python3 scripts/cell_tolerance_sweep.py [--nodes 11] [--tols 1e-3 1e-4 1e-5]
"""

from __future__ import annotations

import argparse
import math
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np

from compdyn.flow import AlphaContext
from compdyn.scenarios import make_scenario
from compdyn.structure import GridSpec, Side, build_cell, cell_audit, equilibrium_target


@dataclass
class SweepConfig:
    nodes: int = 11
    half_width: float = 0.35
    tols: List[float] = field(default_factory=lambda: [1e-3, 1e-4, 1e-5])
    T_max: float = 100.0


def run(cfg: SweepConfig) -> None:
    ctx = AlphaContext.build(make_scenario("may_leonard"))
    target = equilibrium_target(ctx, np.zeros(3))
    mid = cfg.nodes // 2
    print("tol,center_error,missing,unorder_margin,invariance_error,seconds")
    for tol in cfg.tols:
        start = time.perf_counter()
        cell = build_cell(ctx, target, Side.UPPER, GridSpec(cfg.nodes, cfg.half_width), tol, cfg.T_max)
        aud = cell_audit(cell, ctx, samples=10)
        err = abs(cell.heights[mid, mid] - math.sqrt(3) / 2)
        print(f"{tol:g},{err:.3e},{cell.missing_fraction:.3f},{aud.unorder_margin:.4g},"
              f"{aud.invariance_error:.3e},{time.perf_counter() - start:.1f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=SweepConfig.nodes)
    ap.add_argument("--half-width", type=float, default=SweepConfig.half_width)
    ap.add_argument("--tols", type=float, nargs="+", default=None)
    a = ap.parse_args()
    cfg = SweepConfig(a.nodes, a.half_width)
    if a.tols:
        cfg.tols = a.tols
    run(cfg)


if __name__ == "__main__":
    main()
