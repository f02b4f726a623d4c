"""Input parsing with loud failures.

The simulation side writes CSV floats with full repr precision, so parsing
with float() reproduces its numbers bit for bit; readback tests depend on
that. Anything structurally off raises before a figure file can exist.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


class PlotInputError(ValueError):
    """Base for unusable plot inputs."""


class EmptyInputError(PlotInputError):
    pass


class SchemaError(PlotInputError):
    pass


def read_table(path: str | Path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    """CSV to float columns; every required column must exist and parse."""
    path = Path(path)
    if not path.is_file():
        raise PlotInputError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path} is empty (no header row)") from None
        rows = [row for row in reader if row]
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path} lacks required columns {missing}; has {header}")
    if not rows:
        raise EmptyInputError(f"{path} has a header but no data rows")
    width = len(header)
    if any(len(row) != width for row in rows):
        raise SchemaError(f"{path} has ragged rows (header width {width})")
    table: dict[str, np.ndarray] = {}
    for j, name in enumerate(header):
        try:
            table[name] = np.array([float(row[j]) for row in rows])
        except ValueError as exc:
            raise SchemaError(f"{path} column {name!r} is not numeric: {exc}") from None
    return table


def read_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise PlotInputError(f"input file not found: {path}")
    text = path.read_text()
    if not text.strip():
        raise EmptyInputError(f"{path} is empty")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise SchemaError(f"{path} must hold a JSON object, got {type(payload).__name__}")
    return payload


def read_jsonl_first(path: str | Path) -> dict:
    """First record of a JSON-lines file (run summaries hold exactly one)."""
    path = Path(path)
    if not path.is_file():
        raise PlotInputError(f"input file not found: {path}")
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path} line is not valid JSON: {exc}") from None
        if not isinstance(record, dict):
            raise SchemaError(f"{path} records must be JSON objects")
        return record
    raise EmptyInputError(f"{path} holds no records")
