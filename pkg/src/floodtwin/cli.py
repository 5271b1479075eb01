"""Command-line pipeline driver.

Subcommands: truth, synthesize, run, verify, print-config. Exit codes:
0 success, 2 configuration error, 3 numerical divergence, 4 missing artifact.
"""

from __future__ import annotations

import argparse
import sys

from .config import MODES, dump_config, load_config
from .errors import ConfigError, MissingArtifactError, SolverDivergenceError
from .experiment import cmd_run, cmd_synthesize, cmd_truth, cmd_verify

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_MISSING = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floodtwin",
        description="Twin-experiment flood assimilation pipeline")
    parser.add_argument("--config", metavar="PATH", default=None,
                        help="INI config file (defaults are built in)")
    parser.add_argument("--mode", choices=MODES, default=None,
                        help="experiment mode override")
    parser.add_argument("--seed", type=int, default=None,
                        help="ensemble seed override")
    parser.add_argument("--members", type=int, default=None,
                        help="ensemble size override")
    parser.add_argument("--out", metavar="DIR", default=None,
                        help="output directory override")
    parser.add_argument("--workers", type=int, default=None,
                        help="member-propagation process count override")
    parser.add_argument("command",
                        choices=["truth", "synthesize", "run", "verify",
                                 "print-config"],
                        help="pipeline stage to execute")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    run: dict[str, str] = {}
    if args.mode is not None:
        run["mode"] = args.mode
    if args.seed is not None:
        run["seed"] = str(args.seed)
    if args.members is not None:
        run["members"] = str(args.members)
    if args.out is not None:
        run["outdir"] = args.out
    if args.workers is not None:
        run["workers"] = str(args.workers)
    return {"run": run} if run else {}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, _overrides(args))
        if args.command == "print-config":
            sys.stdout.write(dump_config(config))
        elif args.command == "truth":
            print(cmd_truth(config))
        elif args.command == "synthesize":
            print(cmd_synthesize(config))
        elif args.command == "run":
            print(cmd_run(config))
        elif args.command == "verify":
            print(cmd_verify(config))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverDivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
