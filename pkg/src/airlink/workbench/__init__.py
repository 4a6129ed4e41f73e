"""Scenario configuration, execution and reports."""

from .config import (SCHEMA_VERSION, ScenarioConfig, config_hash, dump_config, load_config,
                     parse_config)
from .presets import emit_preset, list_presets, load_preset
from .runner import RunFailure, RunReport, compare_systems, default_out_dir, run_scenario

__all__ = [
    "SCHEMA_VERSION",
    "ScenarioConfig",
    "RunReport",
    "RunFailure",
    "parse_config",
    "load_config",
    "dump_config",
    "config_hash",
    "run_scenario",
    "compare_systems",
    "default_out_dir",
    "list_presets",
    "load_preset",
    "emit_preset",
]
