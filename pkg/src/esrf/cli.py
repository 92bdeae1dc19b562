"""Command-line entry point.

Exit codes: 0 on success, 2 when an acceptance band or audit fails,
1 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .errors import EsrfError
from .experiments import ExperimentConfig, parse_config, run


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="esrf",
        description="Ensemble square root filter experiments and audits",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config")
    run_p.add_argument("config", type=Path, help="flat key=value config file")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--workers", type=int, default=None,
                       help="worker processes (ESRF_WORKERS overrides)")
    run_p.add_argument("--out", type=Path, default=None, help="output directory")

    audit_p = sub.add_parser("audit-transforms", help="randomized structural identity sweep")
    audit_p.add_argument("--sweeps", type=int, default=200)
    audit_p.add_argument("--dim", type=int, default=6)
    audit_p.add_argument("--seed", type=int, default=0)
    audit_p.add_argument("--out", type=Path, default=None)

    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "version":
            print(f"esrf {__version__}")
            return 0
        if args.command == "audit-transforms":
            cfg = ExperimentConfig(kind="transforms-audit", sweeps=args.sweeps,
                                   dim=args.dim, seed=args.seed)
            result = run(cfg, workers=1, out_dir=args.out)
            print(result.summary, end="")
            return 0 if result.passed else 2
        if args.command == "run":
            overrides = {}
            if args.seed is not None:
                overrides["seed"] = args.seed
            cfg = parse_config(args.config, overrides=overrides)
            result = run(cfg, workers=args.workers, out_dir=args.out)
            print(result.summary, end="")
            return 0 if result.passed else 2
        raise AssertionError(f"unhandled command {args.command}")
    except EsrfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure, not an acceptance failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
