"""Experiment configuration, drivers, reports and the command-line interface."""
from .config import ConfigError, ExperimentConfig
from .experiments import run_experiment
from .report import ExperimentReport

__all__ = ["ConfigError", "ExperimentConfig", "ExperimentReport", "run_experiment"]
