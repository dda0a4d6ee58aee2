"""Experiment orchestration: configs, seeded runs, reports and oracle baselines."""
from .config import (
    VARIANTS,
    ExperimentConfig,
    ExperimentConfigError,
    config_from_dict,
    load_config,
    schema_errors,
    validate_config,
)
from .oracle import oracle, random_policy_return
from .report import AlignmentError, RunData, SummaryReport, improvement, load_run, markdown_table, smooth, summarize, write_report
from .runner import MetricsRecord, SeedResult, csv_header, room_boundaries, room_map, run, run_seed

__all__ = [name for name in dir() if not name.startswith("_")]
