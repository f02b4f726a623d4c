"""Run artifacts: records, manifests, and the CSV/JSON-lines emitters.

Records carry a config snapshot and a seed, so outputs are reproducible
bit-exactly; wall-clock and library versions ride along for provenance but
sit outside the determinism contract.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

import dynperc

SCHEMA_VERSION = 1


class RecordVersionError(RuntimeError):
    """Raised when a stored record announces a schema this code predates."""


@dataclass
class RunRecord:
    mode: str
    config: dict
    seed: int
    outputs: dict
    wall_clock: float = 0.0
    code_version: str = dynperc.__version__
    schema_version: int = SCHEMA_VERSION


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def persist_record(record: RunRecord, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = _jsonable(asdict(record))
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def load_record(path: str | Path) -> RunRecord:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"corrupt record file {path}: {exc}") from exc
    if not isinstance(payload, dict) or "schema_version" not in payload:
        raise ValueError(f"corrupt record file {path}: missing schema_version")
    version = payload["schema_version"]
    if version > SCHEMA_VERSION:
        raise RecordVersionError(
            f"record {path} has schema v{version}, this code reads up to v{SCHEMA_VERSION}"
        )
    known = {f for f in RunRecord.__dataclass_fields__}
    return RunRecord(**{k: v for k, v in payload.items() if k in known})


def write_manifest(out_dir: str | Path, config_mapping: dict, extra: dict | None = None) -> Path:
    """Emit manifest.json: the config, code and library versions, schema."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": _jsonable(config_mapping),
        "schema_version": SCHEMA_VERSION,
        "versions": {
            "dynperc": dynperc.__version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        manifest.update(_jsonable(extra))
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])
    return path


def _format_cell(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float):
        return repr(v)  # full precision so readback equals source
    return v


def write_jsonl(path: str | Path, records: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for rec in records:
            fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")
    return path


def write_decay_csv(path: str | Path, tv_max: np.ndarray, per_start: np.ndarray | None = None) -> Path:
    """TV decay curve: columns t, tv_max, then tv_start_<v> when curves kept.

    per_start is the (t, n_vertices) matrix of per-start TV curves.
    """
    header = ["t", "tv_max"]
    if per_start is not None:
        header += [f"tv_start_{v}" for v in range(per_start.shape[1])]
    rows = []
    for i, tv in enumerate(np.asarray(tv_max), start=1):
        row = [i, float(tv)]
        if per_start is not None:
            row += [float(x) for x in per_start[i - 1]]
        rows.append(row)
    return write_csv(path, header, rows)
