#!/usr/bin/env python3
"""Mixing-time scaling campaign over the standard desk grid.

One supercritical and one subcritical edge density, four refresh rates,
five seeds per cell.  Results land under runs/scaling-<p> per density so
the two regimes can be compared side by side (the supercritical fit
should track n^2 + 1/mu; the subcritical one should not).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.append(str(Path(__file__).resolve().parents[1] / "src"))

from dynperc.experiments.cli import main as cli_main


def main() -> None:
    ap = argparse.ArgumentParser(description="Run the standard scaling grid")
    ap.add_argument("--ns", default="8,12,16")
    ap.add_argument("--ps", default="0.8,0.3")
    ap.add_argument("--mus", default="1.0,0.3,0.1,0.03")
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--eps", type=float, default=0.25)
    ap.add_argument("--out-root", type=Path, default=Path("runs"))
    ap.add_argument("--keep-curves", action="store_true")
    args = ap.parse_args()

    for p in args.ps.split(","):
        out = args.out_root / f"scaling-{p.strip()}"
        argv = [
            "mixing-sweep",
            "--d", "2",
            "--n", args.ns,
            "--p", p,
            "--mu", args.mus,
            "--seeds", args.seeds,
            "--eps", str(args.eps),
            "--out", str(out),
        ]
        if args.keep_curves:
            argv.append("--keep-curves")
        code = cli_main(argv)
        if code != 0:
            raise SystemExit(code)


if __name__ == "__main__":
    main()
