"""Command-line entry point.

Example:
    irsnoma simulate --config scenario.json --scheme noma-irs,oma-irs \
        --runs 200 --seed 1 --sweep pmax:10:30:4 --out results/
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .channel import dump_channels, generate_channels
from .config import NetworkConfig, load_config, validate_scenario
from .harness import SCHEMES, SweepSpec, emit_results, run_monte_carlo

log = logging.getLogger("irsnoma")


def _parse_sweep(text: str, schemes: tuple[str, ...], runs: int) -> SweepSpec:
    parts = text.split(":")
    if len(parts) != 4:
        raise ValueError(f"sweep must look like pmax:10:30:2 or elements:20:100:20, got {text!r}")
    param = parts[0]
    if param not in ("pmax", "elements"):
        raise ValueError(f"sweep parameter must be pmax or elements, got {param!r}")
    start, stop, step = (float(p) for p in parts[1:])
    if step <= 0:
        raise ValueError("sweep step must be positive")
    values = tuple(np.arange(start, stop + step / 2, step))
    return SweepSpec(param=param, values=values, runs_per_point=runs, schemes=schemes)


def _parse_schemes(text: str) -> tuple[str, ...]:
    if text == "all":
        return SCHEMES
    schemes = tuple(s.strip() for s in text.split(","))
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}; choose from {', '.join(SCHEMES)} or 'all'")
    return schemes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irsnoma", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run seeded Monte-Carlo batches and write CSVs")
    sim.add_argument("--config", help="JSON scenario file (defaults used when omitted)")
    sim.add_argument(
        "--scheme",
        default="all",
        help="comma-separated subset of: " + ", ".join(SCHEMES) + " (default: all)",
    )
    sim.add_argument("--runs", type=int, default=200, help="runs per grid point (default 200)")
    sim.add_argument("--seed", type=int, default=1, help="master seed (default 1)")
    sim.add_argument(
        "--sweep",
        help="parameter sweep, pmax:START:STOP:STEP in dBm or elements:START:STOP:STEP",
    )
    sim.add_argument("--out", default="results", help="output directory (default ./results)")
    sim.add_argument(
        "--phase-strategy", choices=("bcd", "sdr"), default="bcd",
        help="reflection design strategy (default bcd)",
    )
    sim.add_argument(
        "--dump-channels", metavar="PATH",
        help="write the first channel realization as JSON to PATH",
    )
    sim.add_argument("--log-level", default="INFO")
    return parser


def _simulate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else NetworkConfig()
    validate_scenario(cfg)
    schemes = _parse_schemes(args.scheme)
    if args.runs < 1:
        raise ValueError("--runs must be >= 1")
    sweep = (
        _parse_sweep(args.sweep, schemes, args.runs)
        if args.sweep
        else SweepSpec(param=None, values=(0.0,), runs_per_point=args.runs, schemes=schemes)
    )
    if args.dump_channels:
        first_seed = int(np.random.SeedSequence((args.seed, 0, 0)).generate_state(1, np.uint64)[0])
        dump_channels(generate_channels(sweep.apply(cfg, sweep.values[0]), first_seed),
                      args.dump_channels)
        log.info("channel dump written to %s", args.dump_channels)
    rows, _ = run_monte_carlo(cfg, sweep, master_seed=args.seed, runs=args.runs)
    runs_path, summary_path = emit_results(rows, args.out)
    ok = sum(1 for r in rows if r.run_status == "ok")
    log.info(
        "%d/%d runs ok (%d infeasible, %d errors); wrote %s and %s",
        ok, len(rows),
        sum(1 for r in rows if r.run_status == "infeasible"),
        sum(1 for r in rows if r.run_status == "error"),
        runs_path, summary_path,
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, getattr(args, "log_level", "INFO").upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        if args.command == "simulate":
            return _simulate(args)
        parser.error(f"unknown command {args.command!r}")
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
