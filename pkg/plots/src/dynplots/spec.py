from __future__ import annotations

from dataclasses import dataclass, field

KINDS = ("decay", "scaling", "histogram", "census")


@dataclass(frozen=True)
class FigureSpec:
    """One figure: input files, plot kind, axis options, output image path.

    inputs are positional per kind: decay/histogram/census take one CSV
    (census accepts an optional summary JSONL second), scaling takes the
    medians CSV and optionally the fits JSON for annotations.
    """

    kind: str
    inputs: tuple[str, ...]
    out_path: str
    eps: float | None = None  # reference line for decay figures
    column: str | None = None  # histogram sample column
    bins: int = 20
    log_x: bool | None = None  # None picks the kind's default
    log_y: bool | None = None
    title: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}; choose from {KINDS}")
        if not self.inputs:
            raise ValueError("at least one input file is required")
        if self.kind == "histogram" and not self.column:
            raise ValueError("histogram needs a column name")
        if self.eps is not None and not 0.0 < self.eps < 1.0:
            raise ValueError("eps reference must lie in (0, 1)")
        if self.bins < 1:
            raise ValueError("bins must be positive")
