"""Command-line entry point: ``conga <experiment>``, ``conga simulate``, ``conga list``."""

from __future__ import annotations

import argparse
import sys

from . import experiments as ex
from .discrete import CongaParams, run_conga, write_frame_csv
from .errors import CongaError
from .stochastic import SeedSpec, build_path_increments, make_stream


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conga", description="Conga-line simulation and experiment harness.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="show registered experiments")
    sim = sub.add_parser("simulate", help="run the discrete chain and dump the final frame")
    sim.add_argument("--alpha", type=float, required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--dims", type=int, default=2, choices=(1, 2))
    sim.add_argument("--out", required=True)
    for name in ex.REGISTRY:
        e = sub.add_parser(name, help=ex.REGISTRY[name].claim)
        e.add_argument("--config", required=True, help="JSON file with every ExperimentConfig key")
        e.add_argument("--seed", type=int)
        e.add_argument("--t", type=float, nargs="+", help="replacement t_grid")
        e.add_argument("--replicas", type=int)
        e.add_argument("--out", help="output directory")
        e.add_argument("--workers", type=int)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "list":
            for name, e in ex.REGISTRY.items():
                print(f"{name:20s} {e.claim}\n{'':20s} rule: {e.rule}")
            return 0
        if args.command == "simulate":
            params = CongaParams(args.alpha, args.n, args.dims)
            path = build_path_increments(make_stream(SeedSpec(args.seed, 0)), float(args.n), 1.0, args.dims)
            write_frame_csv(run_conga(params, path), args.out)
            return 0
        cfg = ex.load_config(args.config).to_dict()
        if cfg["experiment"] != args.command:
            raise CongaError(f"config is for {cfg['experiment']!r}, not {args.command!r}")
        for key, val in (("seed", args.seed), ("t_grid", args.t), ("replicas", args.replicas),
                         ("output_path", args.out), ("workers", args.workers)):
            if val is not None:
                cfg[key] = val
        config = ex.ExperimentConfig.from_dict(cfg)
        report = ex.run_experiment(config)
        jpath, _ = ex.emit_report(report, config.output_path)
        for k, v in report.checks.items():
            print(f"{'PASS' if v else 'FAIL'} {k}")
        print(f"{config.experiment}: {'PASS' if report.passed else 'FAIL'} ({report.runtime_seconds:.1f} s) -> {jpath}")
        return 0 if report.passed else 1
    except CongaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
