"""Command line entry point: ``compdyn <subcommand> --config PATH --out DIR --seed N``.

Exit codes: 0 when every audit passes, 1 on any audit violation, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from . import acceptance
from .config import ConfigError, RunConfig, default_config, load_config, serialize_config, with_overrides
from .entropy import entropy_estimate
from .flow import AlphaContext
from .pipeline import (analyze_recurrence, cell_summary, cone_for, integrator_for, padding_for,
                       periodic_witness, scenario_for, theta_for)
from .recurrence import ip_generate, ip_verify, item_rng, recurrent_times, verify_A1
from .structure import (MINUS_INF, PLUS_INF, GridSpec, Side, Target, absorbing_audit,
                        build_cell, cell_audit, cells_disjoint, connecting_consistency,
                        equilibrium_target, intersection_principle_audit, occupation_support,
                        orbit_samples)

log = logging.getLogger("compdyn")

OK, VIOLATION, CONFIG_ERROR = 0, 1, 2


def _write(out: str, name: str, text: str) -> None:
    with open(os.path.join(out, name), "w") as fh:
        fh.write(text)


def _analysis(cfg: RunConfig, certify: bool):
    sc = scenario_for(cfg)
    p = cfg.pipeline
    return analyze_recurrence(sc, cone_for(cfg, sc.dimension), p.depth_schedule, p.map_time,
                              p.samples_per_box, padding_for(cfg), cfg.run.seed,
                              integrator_for(cfg, sc), certify=certify)


def cmd_recurrent(cfg: RunConfig, out: str) -> int:
    ana = _analysis(cfg, certify=False)
    ana.cover.to_csv(os.path.join(out, "cover.csv"))
    if ana.subdivision.graph is not None:
        ana.subdivision.graph.write_edges(os.path.join(out, "edges.txt"))
    ana.write_components(os.path.join(out, "components.csv"))
    _write(out, "history.csv", "depth,mapped,survivors\n" + "".join(
        f"{d},{m},{s}\n" for d, m, s in ana.subdivision.history))
    print(f"{len(ana.cover.active)} boxes at depth {ana.cover.depth}, "
          f"{len(ana.components)} spatial components")
    return OK


def cmd_classify(cfg: RunConfig, out: str) -> int:
    ana = _analysis(cfg, certify=True)
    ana.cover.to_csv(os.path.join(out, "cover.csv"))
    ana.write_components(os.path.join(out, "components.csv"))
    certs = ana.certified
    lines: List[str] = []
    bad = len(ana.violations())
    for comp in ana.violations():
        a, b = comp.verdict.witness
        lines.append(f"dichotomy component={comp.label} witness {a.tolist()} {b.tolist()}")
    if certs:
        own = []
        for c in certs:
            hit = [k.boxes for k in ana.components if k.contains_point(ana.cover, c.z)]
            own.append(np.concatenate(hit) if hit else np.zeros(0, dtype=np.int64))
        rep = intersection_principle_audit(ana.cone, certs, ana.cover, shell=0.01, exclude=own,
                                           resolution=float(ana.cover.radius.max()))
        lines += [f.line() for f in rep.pair_flags + rep.box_flags]
        bad += len(rep.pair_flags) + len(rep.box_flags)
    for comp, pts in zip(ana.components, ana.points):
        if pts is None:
            continue
        ab = absorbing_audit(ana.cone, pts, ana.equilibria, resolution=comp.resolution)
        for q, x, m in ab.violations:
            lines.append(f"absorbing component={comp.label} q={q.tolist()} x={x.tolist()} margin={m!r}")
        bad += len(ab.violations)
        for issue in connecting_consistency(ana.cone, pts, certs, resolution=comp.resolution):
            lines.append(f"connecting component={comp.label} {issue.severity} x={issue.x.tolist()} "
                         f"ordered={issue.ordered_margin!r} unordered={issue.unordered_margin!r}")
            bad += issue.severity == "violation"
    _write(out, "flags.txt", "".join(s + "\n" for s in lines) or "no flags\n")
    print(f"{len(ana.components)} components, {sum(c.verdict is not None for c in ana.components)} "
          f"classified, {bad} violations")
    return VIOLATION if bad else OK


def _target(ctx: AlphaContext, spec: str) -> Target:
    if spec == "+inf":
        return Target(PLUS_INF)
    if spec == "-inf":
        return Target(MINUS_INF)
    point = np.zeros(ctx.scenario.dimension) if spec == "origin" else np.asarray(json.loads(spec), float)
    return equilibrium_target(ctx, point)


def cmd_cells(cfg: RunConfig, out: str) -> int:
    sc = scenario_for(cfg)
    p = cfg.pipeline
    ctx = AlphaContext.build(sc, cone_for(cfg, sc.dimension), integrator_for(cfg, sc))
    grid = GridSpec(p.grid_nodes, p.grid_half_width, p.grid_center)
    cells = []
    bad = 0
    lines = []
    for k, (spec, side) in enumerate(p.cell_targets):
        try:
            target = _target(ctx, spec)
        except (ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cell target {spec!r}: {exc}") from exc
        cell = build_cell(ctx, target, Side.UPPER if side == "upper" else Side.LOWER, grid,
                          p.bisection_tol, p.cell_T_max)
        cell.to_csv(os.path.join(out, f"cell_{k}.csv"))
        aud = cell_audit(cell, ctx, seed=cfg.run.seed, T_max=p.cell_T_max)
        good = (cell.usable and aud.applicable and aud.unorder_margin > 0
                and aud.invariance_error < p.invariance_tol and aud.closure_ok)
        bad += not good
        lines.append(f"cell {k} {cell_summary(cell)} unorder_margin={aud.unorder_margin!r} "
                     f"invariance_error={aud.invariance_error!r} closure_ratio={aud.closure_ratio!r} "
                     f"ok={good}")
        cells.append(cell)
    for i in range(len(cells)):
        for j in range(i + 1, len(cells)):
            rep = cells_disjoint(cells[i], cells[j])
            # only distinct targets on the same side are required to be disjoint
            required = cells[i].side is cells[j].side and str(cells[i].target) != str(cells[j].target)
            lines.append(f"pair {i} {j} separation={rep.separation!r} shared={rep.shared} "
                         f"threshold={rep.threshold!r} required={required} disjoint={rep.disjoint}")
            bad += required and rep.comparable and not rep.disjoint
    _write(out, "cells.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return VIOLATION if bad else OK


def _witness(cfg: RunConfig):
    sc = scenario_for(cfg)
    icfg = integrator_for(cfg, sc)
    cr = periodic_witness(sc, cfg.pipeline.settle_time, cfg=icfg)
    if cr is None:
        raise RuntimeError("no recurrent witness found from the domain center")
    return sc, icfg, cr


def cmd_ipset(cfg: RunConfig, out: str) -> int:
    sc, icfg, cr = _witness(cfg)
    p = cfg.pipeline
    theta, diam = theta_for(sc, p.theta_fraction, icfg, p.theta)
    ip = ip_generate(sc, cr.z, theta, p.ip_generators, p.horizon, icfg, seed=cfg.run.seed)
    ver = ip_verify(sc, cr.z, theta, ip.generators, icfg)
    _write(out, "ipset.txt", ip.report() + f"verified {ver.passed}\n")
    rts = recurrent_times(sc, cr.z, theta, p.horizon, 0.05, icfg)
    rts.to_csv(os.path.join(out, "recurrent_times.csv"))
    rng = item_rng(cfg.run.seed, 10)
    taus = np.exp(rng.uniform(0.0, np.log(200.0), p.a1_trials))
    epss = taus * rng.uniform(0.01, 0.45, p.a1_trials)
    rows = []
    hits = 0
    for tau, eps in zip(taus, epss):
        w = verify_A1(sc, cr.z, theta, float(tau), float(eps), p.horizon, icfg, rts=rts)
        hits += w.found
        rows.append(f"{tau!r},{eps!r},{w.label},{w.n},{w.s!r},{w.error!r}\n")
    _write(out, "a1.csv", "tau,eps,outcome,n,s,error\n" + "".join(rows))
    print(f"theta {theta:.6g} (diameter {diam:.6g}); {len(ip.generators)} generators, worst "
          f"subset-sum error {ver.worst_error:.3g}; A1 witnesses {hits}/{len(taus)}")
    # A1 misses are soft outcomes and never fail the run
    return OK if ver.passed and len(ip.generators) == p.ip_generators else VIOLATION


def cmd_entropy(cfg: RunConfig, out: str) -> int:
    sc, icfg, cr = _witness(cfg)
    p = cfg.pipeline
    samples = orbit_samples(sc, cr, 400, icfg)
    rep = entropy_estimate(sc, samples, p.entropy_horizons, p.entropy_epsilons, icfg)
    rep.to_csv(os.path.join(out, "entropy.csv"))
    _write(out, "entropy_verdict.txt", rep.verdict() + "\n")
    print(rep.verdict())
    return OK if rep.zero_entropy and rep.monotone else VIOLATION


def cmd_occupation(cfg: RunConfig, out: str) -> int:
    sc, icfg, cr = _witness(cfg)
    p = cfg.pipeline
    occ = occupation_support(sc, cr.z, p.occupation_T, p.occupation_burn_in, p.occupation_depth,
                             cfg=icfg)
    with open(os.path.join(out, "occupation.csv"), "w") as fh:
        n = sc.dimension
        fh.write("index,fraction," + ",".join(f"m{i + 1}" for i in range(n)) + "\n")
        for idx, f, c in zip(occ.cover.active, occ.fractions, occ.centroids):
            fh.write(f"{idx},{f!r}," + ",".join(repr(float(v)) for v in c) + "\n")
    occ.cover.to_csv(os.path.join(out, "occupation_support.csv"))
    print(f"{len(occ.cover.active)} support boxes from {occ.samples} samples")
    return OK


def cmd_verify(cfg: RunConfig, out: str) -> int:
    results = acceptance.run_all(cfg, out, echo=print)
    return OK if all(r.passed for r in results) else VIOLATION


COMMANDS = {"recurrent": cmd_recurrent, "classify": cmd_classify, "cells": cmd_cells,
            "ipset": cmd_ipset, "entropy": cmd_entropy, "occupation": cmd_occupation,
            "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="compdyn", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="INI config (default: the shipped default.ini)")
    ap.add_argument("--out", help="artifact directory (overrides run.out)")
    ap.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides run.seed)")
    ap.add_argument("--depth", type=int, help="final subdivision depth")
    ap.add_argument("--theta", type=float, help="recurrence radius (overrides theta_fraction)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else default_config()
        cfg = with_overrides(cfg, seed=args.seed, out=args.out, depth=args.depth, theta=args.theta)
        n = scenario_for(cfg).dimension
        cone_for(cfg, n)
    except (ConfigError, KeyError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    out = cfg.run.out
    os.makedirs(out, exist_ok=True)
    # the artifact copy points at its own directory so reruns elsewhere stay byte-identical
    resolved = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, out="."))
    _write(out, "config.ini", serialize_config(resolved))
    try:
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
