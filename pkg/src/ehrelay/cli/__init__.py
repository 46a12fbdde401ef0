"""Configuration ingestion, experiment orchestration, and report emission."""

from .config import ParsedConfig, load_config, parse_config
from .report import (EXIT_CONFIG, EXIT_ERROR, EXIT_NO_CONVERGENCE, EXIT_OK,
                     EXIT_UNSTABLE, ExperimentSpec, run_experiment)

__all__ = [
    "ParsedConfig", "load_config", "parse_config", "ExperimentSpec",
    "run_experiment", "EXIT_OK", "EXIT_ERROR", "EXIT_CONFIG",
    "EXIT_UNSTABLE", "EXIT_NO_CONVERGENCE",
]
