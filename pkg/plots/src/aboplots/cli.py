"""Command-line figure rendering from analysis tables."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FIGURE_KINDS, FigureSpec, render

_TABLE_FILES = {
    "regret": "regret.csv",
    "distance": "distance.csv",
    "lengthscale": "lengthscale.csv",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="asyncbo-plots",
        description="Render benchmark figures from asyncbo analysis tables",
    )
    parser.add_argument("--kind", choices=FIGURE_KINDS, required=True)
    parser.add_argument(
        "--in", dest="table", required=True,
        help="analysis table file, or the analysis directory holding it",
    )
    parser.add_argument("--rules", nargs="*", default=[],
                        help="rule subset (default: every rule in the table)")
    parser.add_argument("--out", required=True, help="output image path")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    table = Path(args.table)
    if table.is_dir():
        table = table / _TABLE_FILES[args.kind]
    spec = FigureSpec(
        kind=args.kind,
        table_path=str(table),
        output_path=args.out,
        rules=tuple(args.rules),
    )
    try:
        out = render(spec)
    except (ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
