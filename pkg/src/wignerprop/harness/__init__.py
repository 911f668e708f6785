"""Scenario files, runs, comparison metrics, grid files and the command line."""

from .config import ScenarioConfig, list_presets, load_config, load_preset, parse_config
from .fileio import emit_field, read_grid, read_ppm, write_grid, write_ppm
from .metrics import ComparisonMetrics, compare_fields
from .runner import ModuleError, RunResult, run_scenario

__all__ = [
    "ScenarioConfig",
    "list_presets",
    "load_config",
    "load_preset",
    "parse_config",
    "emit_field",
    "read_grid",
    "read_ppm",
    "write_grid",
    "write_ppm",
    "ComparisonMetrics",
    "compare_fields",
    "ModuleError",
    "RunResult",
    "run_scenario",
]
