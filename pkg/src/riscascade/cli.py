"""Command line entry point: ``riscascade run --config cfg.json --out nmse.csv``."""

from __future__ import annotations

import argparse
import sys

from .errors import RisError
from .harness import METHODS, PRESETS, SWEEPS, emit_csv, load_config, sweep


def _methods(text):
    names = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = sorted(set(names) - set(METHODS))
    if bad or not names:
        raise argparse.ArgumentTypeError(f"methods must be a comma list drawn from {METHODS}")
    return names


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="riscascade", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an NMSE sweep and write it as CSV")
    run.add_argument("--config", help="flat JSON object of ExperimentConfig fields")
    run.add_argument("--out", required=True, help="CSV destination; metadata goes next to it")
    run.add_argument("--seed", type=_seed, help="master seed (overrides the config)")
    run.add_argument("--preset", choices=sorted(PRESETS), help="base values under the config")
    run.add_argument("--methods", type=_methods, help="comma list of " + ",".join(METHODS))
    run.add_argument("--sweep", choices=SWEEPS, default="snr")
    run.add_argument("--trials", type=int, help="override the trial count")
    run.add_argument("--workers", type=int, help="worker processes (results do not change)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    preset = args.preset or (None if args.config else "desk")
    try:
        config = load_config(
            args.config, preset, seed=args.seed, methods=args.methods,
            trials=args.trials, workers=args.workers,
        )
        report = sweep(config, args.sweep)
        emit_csv(report, args.out)
    except (RisError, OSError) as exc:
        print(f"riscascade: {exc}", file=sys.stderr)
        return 2
    for row in report.rows:
        print(f"{row.method:>10}  T={row.T:g}  snr={row.snr_db:g} dB  nmse={row.mean_nmse:.4g}")
    if report.failures:
        print(f"{len(report.failures)} method runs failed; see NaN entries", file=sys.stderr)
    return 0
