"""Figures from simulation run outputs.

This package only reads the files the simulation CLI documents (CSV tables,
JSON fit summaries, JSONL run summaries); it never imports the simulator and
never recomputes a statistic. Every number a figure shows is read back from
an input file, and the figure functions return the exact plotted arrays so
tests can assert that.
"""
from dynplots.figures import FigureResult, PlottedSeries, render
from dynplots.readers import EmptyInputError, PlotInputError, SchemaError
from dynplots.spec import KINDS, FigureSpec

__version__ = "0.1.0"

__all__ = [
    "EmptyInputError",
    "FigureResult",
    "FigureSpec",
    "KINDS",
    "PlotInputError",
    "PlottedSeries",
    "SchemaError",
    "render",
    "__version__",
]
