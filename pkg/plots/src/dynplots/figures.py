"""The four figure kinds.

Each builder validates its inputs and assembles the exact arrays to plot
before any matplotlib object exists, so bad inputs can never leave a partial
image behind. Builders return those arrays (and every annotation number)
inside a FigureResult; the tests read five random points back against the
source files.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from dynplots.readers import SchemaError, read_json, read_jsonl_first, read_table
from dynplots.spec import FigureSpec


@dataclass
class PlottedSeries:
    label: str
    x: np.ndarray
    y: np.ndarray
    style: str = "line"  # line | points


@dataclass
class FigureResult:
    out_path: Path
    series: list[PlottedSeries]
    guides: list[PlottedSeries] = field(default_factory=list)
    annotations: dict[str, float] = field(default_factory=dict)


def _build_decay(spec: FigureSpec):
    table = read_table(spec.inputs[0], required=("t", "tv_max"))
    t = table["t"]
    series = [PlottedSeries("tv_max", t, table["tv_max"])]
    starts = sorted(
        (c for c in table if c.startswith("tv_start_")),
        key=lambda c: int(c.rsplit("_", 1)[1]),
    )
    series += [PlottedSeries(c, t, table[c]) for c in starts]
    guides = []
    annotations = {}
    if spec.eps is not None:
        guides.append(
            PlottedSeries("eps", np.array([t[0], t[-1]]), np.full(2, spec.eps))
        )
        annotations["eps"] = spec.eps
    return series, guides, annotations, {"xlabel": "t", "ylabel": "TV distance"}


def _build_scaling(spec: FigureSpec):
    table = read_table(
        spec.inputs[0], required=("n", "p", "mu", "median_mixing_time")
    )
    if np.any(table["mu"] <= 0):
        raise SchemaError("scaling plot needs mu > 0 to place points at 1/mu")
    series = []
    annotations: dict[str, float] = {}
    guides = []
    fits = read_json(spec.inputs[1]) if len(spec.inputs) > 1 else None
    cells = sorted({(p, n) for p, n in zip(table["p"], table["n"])})
    for p, n in cells:
        sel = (table["p"] == p) & (table["n"] == n)
        inv = 1.0 / table["mu"][sel]
        order = np.argsort(inv)
        x, y = inv[order], table["median_mixing_time"][sel][order]
        label = f"p={p:g} n={n:g}"
        series.append(PlottedSeries(label, x, y, style="points" if len(x) == 1 else "line"))
        if fits is not None:
            fit = fits.get(f"p={p}")
            if fit is None:
                raise SchemaError(f"fits file lacks an entry for p={p}")
            slope = fit.get("per_n_slope_vs_invmu", {}).get(f"{n:g}")
            if slope is not None:
                annotations[f"{label} slope"] = float(slope)
            # the stored additive surface drawn at this n, no refitting here
            try:
                a, b, c = fit["additive_a"], fit["additive_b_n2"], fit["additive_c_invmu"]
            except KeyError as exc:
                raise SchemaError(f"fits entry for p={p} lacks {exc}") from None
            if len(x) > 1:
                guides.append(
                    PlottedSeries(f"{label} fit", x, a + b * n * n + c * x)
                )
    return series, guides, annotations, {
        "xlabel": "1/mu",
        "ylabel": "median mixing time",
        "log_x": True,
        "log_y": True,
    }


def _build_histogram(spec: FigureSpec):
    table = read_table(spec.inputs[0], required=(spec.column,))
    values = table[spec.column]
    series = [PlottedSeries(spec.column, np.arange(len(values)), values, style="hist")]
    return series, [], {"samples": float(len(values))}, {
        "xlabel": spec.column,
        "ylabel": "count",
    }


def _build_census(spec: FigureSpec):
    table = read_table(spec.inputs[0], required=("n_good", "n_excellent_given_good"))
    good = table["n_good"]
    series = [
        PlottedSeries(
            "runs", good, table["n_excellent_given_good"], style="points"
        )
    ]
    guides = []
    annotations: dict[str, float] = {}
    if len(spec.inputs) > 1:
        summary = read_jsonl_first(spec.inputs[1])
        if "p_hat" not in summary:
            raise SchemaError(f"{spec.inputs[1]} lacks the pooled ratio field p_hat")
        p_hat = float(summary["p_hat"])
        top = float(good.max())
        guides.append(
            PlottedSeries("pooled ratio", np.array([0.0, top]), np.array([0.0, p_hat * top]))
        )
        annotations["p_hat"] = p_hat
        if "se" in summary:
            annotations["se"] = float(summary["se"])
    return series, guides, annotations, {
        "xlabel": "good times",
        "ylabel": "excellent times",
    }


_BUILDERS = {
    "decay": _build_decay,
    "scaling": _build_scaling,
    "histogram": _build_histogram,
    "census": _build_census,
}


def render(spec: FigureSpec) -> FigureResult:
    """Build the figure for spec and write it; returns everything plotted."""
    series, guides, annotations, opts = _BUILDERS[spec.kind](spec)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    try:
        for s in series:
            if s.style == "points":
                ax.plot(s.x, s.y, "o", label=s.label)
            elif s.style == "hist":
                ax.hist(s.y, bins=spec.bins, label=s.label)
            else:
                ax.plot(s.x, s.y, marker=".", label=s.label)
        for g in guides:
            ax.plot(g.x, g.y, linestyle="--", linewidth=1.0, label=g.label)
        log_x = spec.log_x if spec.log_x is not None else opts.get("log_x", False)
        log_y = spec.log_y if spec.log_y is not None else opts.get("log_y", False)
        if log_x:
            ax.set_xscale("log")
        if log_y:
            ax.set_yscale("log")
        ax.set_xlabel(opts["xlabel"])
        ax.set_ylabel(opts["ylabel"])
        ax.set_title(spec.title or f"{spec.kind}: {Path(spec.inputs[0]).name}")
        if annotations:
            text = "\n".join(f"{k} = {v:g}" for k, v in annotations.items())
            ax.text(
                0.02, 0.02, text, transform=ax.transAxes, fontsize=8,
                verticalalignment="bottom",
            )
        if series or guides:
            ax.legend(fontsize=8)
        out = Path(spec.out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, dpi=130, bbox_inches="tight")
    finally:
        plt.close(fig)
    return FigureResult(
        out_path=Path(spec.out_path), series=series, guides=guides,
        annotations=annotations,
    )
