"""Reusable pipeline steps shared by the CLI subcommands and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .config import RunConfig
from .flow import _cfg_for, attractor_bounds, equilibrium_set, flow_map
from .integrate import IntegratorConfig
from .order import ConeSpec, parse_cone
from .recurrence import (BoxCover, CloseReturn, ComponentRecord, SubdivisionResult,
                         refine_close_return, spatial_components, subdivide_iterate)
from .scenarios import Scenario, make_scenario
from .structure import (CellPatch, GridSpec, VerdictTag, certify_component, classify_component,
                        component_points)


def scenario_for(cfg: RunConfig) -> Scenario:
    dom = cfg.scenario.valid_domain
    return make_scenario(cfg.scenario.name, cfg.scenario.params or None,
                         None if dom is None else (dom[0], dom[1]))


def cone_for(cfg: RunConfig, n: int) -> ConeSpec:
    return parse_cone(cfg.cone.matrix, n, cfg.cone.eta)


def integrator_for(cfg: RunConfig, scenario: Scenario) -> IntegratorConfig:
    return _cfg_for(scenario, IntegratorConfig(rel_tol=cfg.pipeline.rel_tol,
                                               abs_tol=cfg.pipeline.abs_tol))


def padding_for(cfg: RunConfig) -> Optional[float]:
    p = cfg.pipeline.padding
    return None if p == "auto" else float(p)


@dataclass
class RecurrenceAnalysis:
    scenario: Scenario
    cone: ConeSpec
    subdivision: SubdivisionResult
    components: List[ComponentRecord]
    equilibria: np.ndarray
    points: List[Optional[np.ndarray]] = field(default_factory=list)

    @property
    def cover(self) -> BoxCover:
        return self.subdivision.cover

    @property
    def certified(self) -> List[CloseReturn]:
        return [c for comp in self.components for c in comp.certified]

    def violations(self) -> List[ComponentRecord]:
        return [c for c in self.components
                if c.verdict is not None and c.verdict.tag is VerdictTag.VIOLATION]

    def write_components(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("label,boxes,certified,verdict,margin,resolution\n")
            for c in self.components:
                tag = c.verdict.tag.value if c.verdict is not None else "Uncertified"
                margin = repr(float(c.verdict.margin)) if c.verdict is not None else "nan"
                fh.write(f"{c.label},{c.size},{len(c.certified)},{tag},{margin},{c.resolution!r}\n")


def analyze_recurrence(scenario: Scenario, cone: ConeSpec, depth_schedule, T: float = 1.0,
                       samples_per_box: int = 4, padding: Optional[float] = None, seed: int = 0,
                       cfg: Optional[IntegratorConfig] = None, certify: bool = True,
                       samples_per_orbit: int = 100) -> RecurrenceAnalysis:
    """Cover, spatial components, close-return certification and dichotomy verdicts.

    Components without a certified recurrent point stay unclassified: they are
    chain-recurrent artifacts of the outer approximation as far as the audit knows.
    """
    sub = subdivide_iterate(scenario, depth_schedule=tuple(depth_schedule), T=T,
                            samples_per_box=samples_per_box, padding=padding, seed=seed, cfg=cfg)
    comps = spatial_components(sub.cover)
    eq = equilibrium_set(scenario)
    pts: List[Optional[np.ndarray]] = []
    for label, comp in enumerate(comps):
        comp.label = label
        if not certify:
            pts.append(None)
            continue
        comp.certified = certify_component(scenario, comp, sub.cover, eq, cfg=cfg)
        if comp.certified:
            p = component_points(scenario, comp.certified, samples_per_orbit, cfg)
            comp.verdict = classify_component(cone, p, eq, resolution=comp.resolution)
            pts.append(p)
        else:
            pts.append(None)
    return RecurrenceAnalysis(scenario, cone, sub, comps, eq, pts)


def theta_for(scenario: Scenario, fraction: float, cfg: Optional[IntegratorConfig] = None,
              override: Optional[float] = None):
    """(theta, attractor diameter) with theta = fraction * diameter unless overridden."""
    b = attractor_bounds(scenario, cfg=cfg)
    return (override if override is not None else fraction * b.diameter), b.diameter


def periodic_witness(scenario: Scenario, settle: float = 3000.0, window=(1.0, 60.0),
                     theta: float = 1e-3, start=None,
                     cfg: Optional[IntegratorConfig] = None) -> Optional[CloseReturn]:
    """Close return of the settled forward orbit of ``start`` (default: domain center)."""
    x0 = scenario.domain_center if start is None else np.asarray(start, dtype=float)
    fr = flow_map(scenario, x0, settle, cfg)
    if not fr.ok:
        return None
    return refine_close_return(scenario, fr.point, window, theta, cfg)


def grid_around(cell_origin, basis, points, nodes: int, pad: float = 0.15) -> GridSpec:
    """Square grid on the hyperplane covering the projection of ``points``."""
    g = (np.atleast_2d(points) - cell_origin) @ basis.T
    lo, hi = g.min(axis=0), g.max(axis=0)
    half = 0.5 * float((hi - lo).max()) * (1 + pad)
    return GridSpec(nodes, half, list(0.5 * (lo + hi)))


def cell_summary(cell: CellPatch) -> str:
    return (f"target={cell.target} side={cell.side.value} nodes={cell.heights.size} "
            f"missing={cell.missing_fraction:.4f} tol={cell.tol:g}")
