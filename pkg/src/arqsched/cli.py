"""Command-line entry point.

Usage: ``schedsim <command> --spec <file> --out <dir> [--seed N] [--jobs K]``.
Exit status: 0 on success, 1 when a validation or property suite fails,
2 on usage or spec-schema errors.
"""

from __future__ import annotations

import argparse
import os
import sys

from .experiment import COMMANDS, SpecError, load_spec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="schedsim",
        description="Scheduling experiments over Markov ON/OFF channels "
                    "with ARQ feedback.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--spec", required=True, help="JSON experiment spec")
        p.add_argument("--out", required=True, help="output directory for CSV tables")
        p.add_argument("--seed", type=int, default=None,
                       help="override the spec's master seed")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker count (default: SCHEDSIM_JOBS or 1)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    jobs = args.jobs
    if jobs is None:
        try:
            jobs = int(os.environ.get("SCHEDSIM_JOBS", "1"))
        except ValueError:
            print("SCHEDSIM_JOBS must be an integer", file=sys.stderr)
            return 2
    try:
        spec = load_spec(args.spec)
        if spec["kind"] != args.command:
            raise SpecError(
                f"spec kind {spec['kind']!r} does not match command {args.command!r}"
            )
        if args.seed is not None:
            spec["seed"] = args.seed
        return COMMANDS[args.command](spec, args.out, jobs=jobs)
    except SpecError as exc:
        print(f"schedsim: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
