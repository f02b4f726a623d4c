"""Command line: one figure per invocation."""
from __future__ import annotations

import argparse
import sys

from dynplots.figures import render
from dynplots.readers import PlotInputError
from dynplots.spec import KINDS, FigureSpec


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dynperc-plot", description="Render one figure from run outputs"
    )
    ap.add_argument("--kind", required=True, choices=KINDS)
    ap.add_argument(
        "--input", action="append", required=True,
        help="input file; repeat for kinds that take a second file "
             "(scaling: medians CSV then fits JSON; census: runs CSV then summary JSONL)",
    )
    ap.add_argument("--out", required=True, help="output image path (.png or .svg)")
    ap.add_argument("--eps", type=float, help="TV reference line for decay plots")
    ap.add_argument("--column", help="sample column for histograms")
    ap.add_argument("--bins", type=int, default=20)
    ap.add_argument("--log-x", dest="log_x", action="store_true", default=None)
    ap.add_argument("--log-y", dest="log_y", action="store_true", default=None)
    ap.add_argument("--title")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            kind=args.kind,
            inputs=tuple(args.input),
            out_path=args.out,
            eps=args.eps,
            column=args.column,
            bins=args.bins,
            log_x=args.log_x,
            log_y=args.log_y,
            title=args.title,
        )
        result = render(spec)
    except (PlotInputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(result.out_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
