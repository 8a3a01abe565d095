"""Experiment configuration, scenarios and run records."""

from .config import DEFAULTS, SCENARIOS, ExperimentConfig, parse_config_text, validate
from .plotdata import emit_plotdata
from .records import RunRecord
from .scenarios import UsageError, run_scenario

__all__ = [
    "DEFAULTS", "SCENARIOS", "ExperimentConfig", "RunRecord", "UsageError", "emit_plotdata",
    "parse_config_text", "run_scenario", "validate",
]
