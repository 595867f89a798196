"""Command-line entry point.

Exit codes: 0 success, 1 infeasible instance, 2 invalid input,
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import sdp
from .beamforming import InfeasibleProblem, OptimizeOptions, SolverFailure, build_relaxation, optimize
from .experiment import ExperimentConfig, generate_channels, run_sweep, sweep_csv, sweep_json, thresholds_for
from .miso import MisoChannel, feasibility_test
from .signal_chain import LinkConfig, simulate_receiver, write_trace_csv

EXIT_OK, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2, 3


class InvalidInput(Exception):
    pass


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(loader, path):
    if path is None:
        raise InvalidInput("--config is required")
    try:
        return loader(path)
    except FileNotFoundError:
        raise InvalidInput(f"config file not found: {path}")
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise InvalidInput(f"invalid config {path}: {exc}")


def _experiment(args) -> ExperimentConfig:
    cfg = _load(ExperimentConfig.from_json, args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _channel(cfg: ExperimentConfig, override):
    path = override or cfg.channel_csv
    if path:
        try:
            ch = MisoChannel.from_csv(path)
        except (OSError, ValueError) as exc:
            raise InvalidInput(f"cannot read channel {path}: {exc}")
        if ch.h_matrix.shape != (cfg.n_antennas, cfg.k_users):
            raise InvalidInput(f"channel shape {ch.h_matrix.shape} does not match "
                               f"({cfg.n_antennas}, {cfg.k_users})")
        return ch
    return generate_channels(cfg)[0]


def cmd_simulate_receiver(args):
    cfg = _load(LinkConfig.from_json, args.config)
    seed = 0 if args.seed is None else args.seed
    try:
        report, traces = simulate_receiver(cfg, args.samples, seed)
    except ValueError as exc:
        raise InvalidInput(str(exc))
    data = report.to_dict()
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(data))
        writer.writerow([repr(v) for v in data.values()])
        text = buf.getvalue()
    else:
        text = json.dumps(data, indent=2) + "\n"
    _emit(text, args.out)
    if args.trace_csv:
        write_trace_csv(args.trace_csv, traces[args.trace])
    return EXIT_OK


def cmd_optimize(args):
    cfg = _experiment(args)
    ch = _channel(cfg, args.channel)
    th = thresholds_for(cfg)
    if args.dump_sdpa:
        sdp.write_sdpa(args.dump_sdpa, build_relaxation(ch, th).to_sdp())
    try:
        sol = optimize(ch, th, OptimizeOptions(seed=cfg.seed))
    except InfeasibleProblem as exc:
        _emit(json.dumps({"status": "infeasible", "reason": exc.reason}, indent=2) + "\n", args.out)
        return EXIT_INFEASIBLE
    except SolverFailure as exc:
        _emit(json.dumps({"status": "solver_failure", "reason": str(exc)}, indent=2) + "\n", args.out)
        return EXIT_SOLVER
    _emit(json.dumps({"status": "optimal", **sol.to_dict()}, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_sweep(args):
    cfg = _experiment(args)
    if cfg.sweep is None:
        raise InvalidInput("config has no sweep section")
    rows = run_sweep(cfg)
    text = sweep_csv(rows) if args.format == "csv" else sweep_json(cfg, rows) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_feasibility(args):
    cfg = _experiment(args)
    ch = _channel(cfg, args.channel)
    verdict = feasibility_test(ch, thresholds_for(cfg))
    _emit(json.dumps(verdict.to_dict(), indent=2) + "\n", args.out)
    return EXIT_OK if verdict.feasible else EXIT_INFEASIBLE


def build_parser():
    parser = argparse.ArgumentParser(prog="swipt-diplexer",
                                     description="Diplexer-based SWIPT receiver and MISO beamforming tools")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, formats, default):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=formats, default=default)

    p = sub.add_parser("simulate-receiver", help="simulate the point-to-point link and receiver")
    common(p, ["json", "csv"], "json")
    p.add_argument("--samples", type=int, default=1_048_576)
    p.add_argument("--trace-csv", help="also dump one trace as time,value CSV")
    p.add_argument("--trace", default="h", choices=["r", "g1", "g2", "r1", "r2", "r3", "r4", "l", "h"])
    p.set_defaults(func=cmd_simulate_receiver)

    p = sub.add_parser("optimize", help="minimum-power beamformers for one channel")
    common(p, ["json"], "json")
    p.add_argument("--channel", help="channel CSV (N rows, K columns)")
    p.add_argument("--dump-sdpa", help="write the relaxed SDP in SDPA format")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="threshold sweep averaged over random channels")
    common(p, ["csv", "json"], "csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("feasibility", help="SINR feasibility predicate")
    common(p, ["json"], "json")
    p.add_argument("--channel", help="channel CSV (N rows, K columns)")
    p.set_defaults(func=cmd_feasibility)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
