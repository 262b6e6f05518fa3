"""Run configuration: INI sections whose values are JSON literals."""

from __future__ import annotations

import configparser
import dataclasses
import io
import json
from dataclasses import dataclass, field, fields
from importlib import resources
from typing import List, Optional, Union

from .scenarios import REGISTRY


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioBlock:
    name: str = "lv3_cycle"
    params: dict = field(default_factory=dict)
    valid_domain: Optional[List[List[float]]] = None  # [lo, hi]


@dataclass
class ConeBlock:
    matrix: Union[str, List[List[float]]] = "identity"
    eta: float = 1e-9


@dataclass
class PipelineBlock:
    depth_schedule: List[int] = field(default_factory=lambda: [2, 4, 6])
    map_time: float = 1.0
    samples_per_box: int = 4
    padding: Union[str, float] = "auto"
    theta_fraction: float = 0.05
    theta: Optional[float] = None
    horizon: float = 1e4
    ip_generators: int = 10
    a1_trials: int = 50
    grid_nodes: int = 21
    grid_half_width: float = 0.35
    grid_center: Optional[List[float]] = None  # hyperplane coordinates
    cell_targets: List[List[str]] = field(default_factory=lambda: [["origin", "upper"],
                                                                    ["+inf", "lower"]])
    bisection_tol: float = 1e-4
    cell_T_max: float = 100.0
    invariance_tol: float = 1e-3
    containment_tol: float = 5e-3
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    entropy_horizons: List[float] = field(default_factory=lambda: [20.0, 40.0, 80.0])
    entropy_epsilons: List[float] = field(default_factory=lambda: [0.05, 0.1])
    occupation_T: float = 600.0
    occupation_burn_in: float = 100.0
    occupation_depth: int = 7
    settle_time: float = 3000.0


@dataclass
class RunBlock:
    seed: int = 0
    out: str = "runs/default"


@dataclass
class RunConfig:
    scenario: ScenarioBlock = field(default_factory=ScenarioBlock)
    cone: ConeBlock = field(default_factory=ConeBlock)
    pipeline: PipelineBlock = field(default_factory=PipelineBlock)
    run: RunBlock = field(default_factory=RunBlock)

    def validate(self) -> "RunConfig":
        if self.scenario.name not in REGISTRY:
            raise ConfigError(f"unknown scenario {self.scenario.name!r}")
        m = self.cone.matrix
        if isinstance(m, str):
            if m != "identity":
                raise ConfigError(f"cone matrix must be 'identity' or a square matrix, got {m!r}")
        elif not (isinstance(m, list) and m and all(isinstance(r, list) and len(r) == len(m) for r in m)):
            raise ConfigError("cone matrix must be square")
        p = self.pipeline
        positive = ["map_time", "theta_fraction", "horizon", "grid_half_width", "bisection_tol",
                    "cell_T_max", "invariance_tol", "containment_tol", "rel_tol", "abs_tol",
                    "occupation_T", "settle_time"]
        for name in positive:
            if not getattr(p, name) > 0:
                raise ConfigError(f"pipeline.{name} must be positive")
        if self.cone.eta < 0:
            raise ConfigError("cone.eta must be nonnegative")
        if p.theta is not None and p.theta <= 0:
            raise ConfigError("pipeline.theta must be positive")
        if not p.depth_schedule or any(d < 1 for d in p.depth_schedule) or \
                list(p.depth_schedule) != sorted(p.depth_schedule):
            raise ConfigError("pipeline.depth_schedule must be increasing positive depths")
        if p.padding != "auto" and not (isinstance(p.padding, (int, float)) and p.padding >= 0):
            raise ConfigError("pipeline.padding must be 'auto' or a nonnegative number")
        if not 0 <= self.run.seed < 2 ** 64:
            raise ConfigError("run.seed must be an unsigned 64-bit integer")
        for entry in p.cell_targets:
            if not (isinstance(entry, list) and len(entry) == 2 and entry[1] in ("upper", "lower")
                    and isinstance(entry[0], str)):
                raise ConfigError("pipeline.cell_targets entries must be [target, 'upper'|'lower']")
        if p.occupation_burn_in >= p.occupation_T:
            raise ConfigError("pipeline.occupation_burn_in must be below occupation_T")
        return self


_SECTIONS = {"scenario": ScenarioBlock, "cone": ConeBlock, "pipeline": PipelineBlock, "run": RunBlock}


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive
    return cp


def parse_config(text: str) -> RunConfig:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    blocks = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
    for section, cls in _SECTIONS.items():
        known = {f.name for f in fields(cls)}
        values = {}
        if cp.has_section(section):
            for key, raw in cp.items(section):
                if key not in known:
                    raise ConfigError(f"unknown key {section}.{key}")
                try:
                    values[key] = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{section}.{key}: not a JSON value ({exc.msg})") from exc
        blocks[section] = cls(**values)
    return RunConfig(**blocks).validate()


def serialize_config(cfg: RunConfig) -> str:
    cp = _parser()
    for section in _SECTIONS:
        block = getattr(cfg, section)
        cp[section] = {f.name: json.dumps(getattr(block, f.name)) for f in fields(block)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


def default_config_text() -> str:
    return resources.files("compdyn").joinpath("default.ini").read_text()


def default_config() -> RunConfig:
    return parse_config(default_config_text())


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    """Copy with top-level overrides: seed, out, depth, theta (None means keep)."""
    run = dataclasses.replace(cfg.run)
    pipe = dataclasses.replace(cfg.pipeline)
    if kw.get("seed") is not None:
        run.seed = int(kw["seed"])
    if kw.get("out") is not None:
        run.out = str(kw["out"])
    if kw.get("depth") is not None:
        d = int(kw["depth"])
        pipe.depth_schedule = [x for x in pipe.depth_schedule if x < d] + [d]
    if kw.get("theta") is not None:
        pipe.theta = float(kw["theta"])
    return dataclasses.replace(cfg, run=run, pipeline=pipe).validate()
