"""Command line entry point.

Usage::

    fermikin <micro|boltzmann|compare-theorem1|stationarity-theorem2|
              fixed-point|graphs|diagnostics> --config <path>
              [--out <dir>] [--seed <u64>] [--threads <n>]

``FERMIKIN_THREADS`` is the fallback for ``--threads``.  Exit codes:
0 success, 1 validation error, 2 compute error, 3 non-convergence
(results written, flagged in the manifest).
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import EXPERIMENTS, ConfigError, parse_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fermikin", description=__doc__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--threads", type=int, default=None, help="worker processes (overrides config)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = parse_config(args.config)
        if config.experiment != args.experiment:
            raise ConfigError(
                f"config declares experiment '{config.experiment}' but subcommand is '{args.experiment}'"
            )
        if args.seed is not None:
            config.seed = args.seed
            config.values[("run", "seed")] = args.seed
        threads = args.threads
        if threads is None:
            env = os.environ.get("FERMIKIN_THREADS")
            threads = int(env) if env else config.threads
        out_dir = args.out or config.out
    except ConfigError as exc:
        print(f"fermikin: configuration error: {exc}", file=sys.stderr)
        return 1

    from . import runner

    try:
        status = runner.run(config, out_dir=out_dir, threads=threads)
    except ConfigError as exc:
        print(f"fermikin: configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # compute error
        print(f"fermikin: error: {exc}", file=sys.stderr)
        return 2
    if status == 3:
        print("fermikin: non-convergence flagged; results written and marked", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
