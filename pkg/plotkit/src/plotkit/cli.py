"""Command-line entry point: schedplot --kind <k> --in <csv> --out <img>.

Exit codes: 0 on success, 1 when the input fails schema or data checks,
2 on usage errors (unknown kind, unsupported output format).
"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="schedplot",
        description="Render experiment CSV tables into static figures.",
    )
    parser.add_argument("--kind", required=True, choices=KINDS,
                        help="which table schema the input follows")
    parser.add_argument("--in", dest="input", required=True,
                        help="input CSV file")
    parser.add_argument("--out", dest="output", required=True,
                        help="output image (.png or .svg)")
    parser.add_argument("--xlabel", default=None)
    parser.add_argument("--ylabel", default=None)
    parser.add_argument("--title", default=None)
    parser.add_argument(
        "--ref", action="append", default=[], metavar="LABEL=VALUE",
        help="horizontal reference line, repeatable (e.g. --ref 'budget=1.0')",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0

    refs = {}
    for item in args.ref:
        label, sep, value = item.partition("=")
        try:
            if not sep:
                raise ValueError
            refs[label] = float(value)
        except ValueError:
            print(f"schedplot: bad --ref {item!r}, expected LABEL=VALUE",
                  file=sys.stderr)
            return 2

    try:
        spec = FigureSpec(args.input, args.kind, args.output,
                          xlabel=args.xlabel, ylabel=args.ylabel,
                          title=args.title, ref_lines=refs)
    except ValueError as exc:
        print(f"schedplot: {exc}", file=sys.stderr)
        return 2
    try:
        render(spec)
    except SchemaError as exc:
        print(f"schedplot: {exc}", file=sys.stderr)
        return 1
    return 0


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
