"""Command-line entry point.

    sgldstab bounds|simulate|couple|verify|experiment --config PATH
             [--seed N] [--out DIR] [--format json|csv]

Exit status: 0 when every verdict passes, 2 when any verdict fails, 1 on a
usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .. import bounds
from ..core import sample_ball
from ..couplings import run_coupled
from ..dynamics import iterate_chain
from ..streams import ReplicaStreams, make_generator
from .config import ConfigError, ExperimentConfig
from .experiments import neighbor_points, run_experiment
from .report import Curve, ExperimentReport

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2
COMMANDS = ("bounds", "simulate", "couple", "verify", "experiment")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sgldstab", description="SGLD stability toolkit: bounds, simulation and "
                                             "verification experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON experiment config (optional for verify)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="directory for report.json and per-curve CSV files")
    p.add_argument("--format", choices=("json", "csv"), help="stdout format (default: config)")
    return p


def _load(args) -> ExperimentConfig:
    if args.config is None:
        if args.command != "verify":
            raise ConfigError(f"{args.command} needs --config")
        raw = {"experiment": "verify"}
    else:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if args.command == "verify":
        raw["experiment"] = "verify"
    elif args.command != "experiment":
        raw.setdefault("experiment", "verify")
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.format is not None:
        raw["format"] = args.format
    return ExperimentConfig.from_dict(raw)


def bounds_report(cfg: ExperimentConfig) -> ExperimentReport:
    """Every constant that applies to the configured loss, plus theorem curves in t."""
    t0 = time.perf_counter()
    model = cfg.model()
    c = model.constants
    init = cfg.initial.spec()
    rep = ExperimentReport("bounds", cfg.to_dict())
    steps = np.arange(0, cfg.horizon + 1, cfg.record_every, dtype=float)
    if steps[-1] != cfg.horizon:
        steps = np.append(steps, float(cfg.horizon))
    nan = np.full(steps.size, math.nan)
    if c.L is not None and c.lam > 0:
        lc = bounds.lipschitz_constants(c.L, c.M, c.lam, cfg.beta, sigma1=init.moment(model.d, 1))
        rep.constants["lipschitz"] = lc.to_dict()
        for cont in (True, False):
            kind = "gen_cts_lip" if cont else "gen_disc_lip"
            try:
                vals = [bounds.lipschitz_gen_bound(lc, cfg.n, cfg.k, cfg.eta, s, model.d, cont)
                        for s in steps]
            except ValueError as exc:
                rep.constants[f"{kind}_unavailable"] = str(exc)
                continue
            rep.curves[kind] = Curve(steps, nan, nan, vals)
    if c.dissipative:
        dc = bounds.dissipative_constants(c.M, c.m, c.b, model.d, cfg.beta,
                                          init.moment(model.d, 2), init.moment(model.d, 4))
        rep.constants["dissipative"] = dc.to_dict()
        rep.constants["dissipative"]["c_tilde_3"] = dc.c_tilde_3(cfg.eta, cfg.n, cfg.k)
        for cont in (True, False):
            kind = "gen_cts_diss" if cont else "gen_disc_diss"
            try:
                vals = [bounds.dissipative_gen_bound(dc, cfg.n, cfg.k, cfg.eta, s, cont)
                        for s in steps]
            except ValueError as exc:
                rep.constants[f"{kind}_unavailable"] = str(exc)
                continue
            rep.curves[kind] = Curve(steps, nan, nan, vals)
        rep.constants["gradient_origin"] = bounds.analytic_lemma_bounds(
            "gradient_origin", M=c.M, m=c.m, b=c.b)
        rep.constants["minima_radius"] = bounds.analytic_lemma_bounds("minima_radius", m=c.m,
                                                                      b=c.b)
    if not rep.constants:
        raise ConfigError("the configured loss has neither weight decay nor dissipativity")
    rep.wall_time = time.perf_counter() - t0
    return rep


def simulate_report(cfg: ExperimentConfig) -> ExperimentReport:
    """Single-chain Monte Carlo: E||x_t|| and E||x_t||^2 over replicas."""
    t0 = time.perf_counter()
    model = cfg.model()
    rep = ExperimentReport("simulate", cfg.to_dict())
    pts = sample_ball(make_generator(cfg.seed, "simulate/data"), cfg.n, model.d, model.z_max)
    streams = ReplicaStreams(cfg.seed, "simulate", cfg.replicas)
    init = cfg.initial.spec()
    x0 = streams.initial(model.d, init.x0, init.sigma0)
    ts, acc = [], {1: ([], []), 2: ([], [])}
    for t, x in iterate_chain(x0, model, pts, cfg.sgld(), cfg.horizon, streams, cfg.continuous):
        if t % cfg.record_every and t != cfg.horizon:
            continue
        r = np.linalg.norm(x, axis=-1)
        ts.append(t)
        for p, (mu, se) in acc.items():
            v = r**p
            mu.append(float(np.add.reduce(v) / v.size))
            se.append(float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0)
    for p, (mu, se) in acc.items():
        rep.curves[f"moment_{p}"] = Curve(ts, mu, se, math.nan)
    rep.wall_time = time.perf_counter() - t0
    return rep


def couple_report(cfg: ExperimentConfig) -> ExperimentReport:
    """Coupled pair statistics; neighbouring data sets unless the mode is reflection."""
    t0 = time.perf_counter()
    model = cfg.model()
    rep = ExperimentReport("couple", cfg.to_dict())
    pts = sample_ball(make_generator(cfg.seed, "couple/data"), cfg.n, model.d, model.z_max)
    ccfg = cfg.coupling_config(force_index=cfg.n - 1 if cfg.coupling.force_in_batch else None)
    other = pts if ccfg.mode == "reflection" else neighbor_points(pts, model.z_max)
    traj = run_coupled((cfg.initial.spec(), cfg.initial_b.spec()), model, (pts, other),
                       cfg.sgld(), ccfg, cfg.horizon,
                       ReplicaStreams(cfg.seed, "couple", cfg.replicas),
                       continuous=cfg.continuous, every=cfg.record_every)
    for name in traj.mean:
        rep.curves[name] = Curve(traj.t, traj.mean[name], traj.sem[name], math.nan)
    met = traj.meet_step[traj.meet_step >= 0]
    rep.fits["meeting"] = {"fraction_met": float(met.size / traj.replicas),
                           "median_meet_step": float(np.median(met)) if met.size else math.nan}
    rep.wall_time = time.perf_counter() - t0
    return rep


def run_command(command: str, cfg: ExperimentConfig) -> ExperimentReport:
    if command == "bounds":
        return bounds_report(cfg)
    if command == "simulate":
        return simulate_report(cfg)
    if command == "couple":
        return couple_report(cfg)
    return run_experiment(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        rep = run_command(args.command, cfg)
    except ValueError as exc:
        # ConfigError is a ValueError; invalid parameter combinations surface the same way
        print(f"sgldstab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.out:
        rep.write(args.out)
    if cfg.format == "csv":
        for name, curve in rep.curves.items():
            sys.stdout.write(f"# {name}\n{curve.to_csv()}")
    else:
        sys.stdout.write(rep.to_json())
    for line in rep.summary_lines():
        print(line, file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
