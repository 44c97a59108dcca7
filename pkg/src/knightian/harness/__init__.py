"""Experiment harness: configuration, environments, runner, audit and CLI."""

from .audit import audit_run
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .runner import RunRecord, run_experiment

__all__ = ["ConfigError", "ExperimentConfig", "RunRecord", "audit_run", "load_config", "parse_config",
           "run_experiment"]
