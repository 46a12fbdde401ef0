"""Command-line entry point."""

from __future__ import annotations

import argparse
import sys

from ..channel import RELAY_POLICIES
from ..errors import ConfigError
from .report import EXIT_CONFIG, MODES, SWEEP_KEYS, ExperimentSpec, run_experiment


def _parse_sweep(text: str) -> tuple[str, tuple[float, ...]]:
    if "=" not in text:
        raise ConfigError("--sweep expects key=v1,v2,...")
    key, _, tail = text.partition("=")
    key = key.strip()
    if key not in SWEEP_KEYS:
        raise ConfigError(f"cannot sweep {key!r}; pick one of "
                          + ", ".join(sorted(SWEEP_KEYS)))
    try:
        values = tuple(float(v) for v in tail.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"--sweep values must be numeric, got {tail!r}") from None
    if not values:
        raise ConfigError("--sweep grid is empty")
    return key, values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ehrelay",
        description="Analytical and Monte Carlo reports for a single-relay "
                    "energy-harvesting network with opportunistic routing "
                    "and threshold selection combining.")
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--config", required=True, help="path to a key = value config file")
    p.add_argument("--slots", type=int, default=200_000,
                   help="slots per replication (simulation modes)")
    p.add_argument("--reps", type=int, default=1,
                   help="independent replications, streams derived from (seed, rep)")
    p.add_argument("--seed", type=int, default=1, help="base 64-bit seed")
    p.add_argument("--sweep", default=None, metavar="KEY=V1,V2,...",
                   help="sweep grid (sweep mode), e.g. z=0.0833,0.1667,0.5")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--policy", choices=RELAY_POLICIES, default=None,
                   help="override the config's relay discharge policy")
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering, emit CSV only")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel workers for sweep grid points")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sweep = _parse_sweep(args.sweep) if args.sweep else None
        spec = ExperimentSpec(
            mode=args.mode, config_path=args.config, slots=args.slots,
            reps=args.reps, seed=args.seed, sweep=sweep, out_dir=args.out,
            policy=args.policy, figures=not args.no_figures,
            workers=args.workers)
    except ConfigError as err:
        print(f"ehrelay: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return run_experiment(spec)


if __name__ == "__main__":
    sys.exit(main())
