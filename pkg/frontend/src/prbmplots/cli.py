"""CLI: `plots render --spec spec.json` (exit 0 on success, 2 on bad input)."""

import argparse
import json
import sys

from .render import FigureSpec, MissingColumnError, SpecError, render


def build_parser():
    parser = argparse.ArgumentParser(prog="plots")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure from a JSON spec")
    p.add_argument("--spec", required=True, help="path to a figure-spec JSON")
    return parser


def cli_main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        with open(args.spec) as fh:
            spec = FigureSpec.from_json(fh.read())
        path = render(spec)
    except (MissingColumnError, SpecError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
