"""Configuration, experiment runner and command-line interface."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config, serialize_config
from .experiment import (
    CSV_COLUMNS,
    ExperimentResult,
    MetricsRow,
    PosteriorReport,
    build_problem,
    config_from_csv,
    ensemble_report,
    error_metrics,
    posterior_report,
    run_experiment,
)
