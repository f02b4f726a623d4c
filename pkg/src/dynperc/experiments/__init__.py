"""Experiment orchestration: grids, schedules, persistence, and the CLI."""

from dynperc.experiments.config import (
    DeskProfile,
    ExperimentConfig,
    literal_round_budget,
    literal_run_length,
    literal_warmup,
    parse_config_text,
)
from dynperc.experiments.records import RunRecord, load_record, persist_record

__all__ = [
    "DeskProfile",
    "ExperimentConfig",
    "RunRecord",
    "literal_round_budget",
    "literal_run_length",
    "literal_warmup",
    "load_record",
    "parse_config_text",
    "persist_record",
]
