"""Experiment orchestration: configs, manifests, runs, reports and the CLI."""
from .config import (ConfigError, ExperimentConfig, default_config, load_config, parse_lines,
                     read_records, write_manifest)
from .runs import (HarnessError, build_report, cmd_compare, cmd_generate, cmd_report, cmd_train,
                   final_quarter_gap, load_checkpoint, read_runs, save_checkpoint, table_row)
from .stats import paired_permutation_test, summary

__all__ = [
    "ConfigError", "ExperimentConfig", "default_config", "load_config", "parse_lines",
    "read_records", "write_manifest", "HarnessError", "build_report", "cmd_compare",
    "cmd_generate", "cmd_report", "cmd_train", "final_quarter_gap", "load_checkpoint",
    "read_runs", "save_checkpoint", "table_row", "paired_permutation_test", "summary",
]
