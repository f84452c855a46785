"""
BLPP Lab Validation Module

Registered experiments, the replica runner and the run artifact writers.
"""

from .experiments import (
    EXPERIMENTS,
    Experiment,
    ExperimentConfig,
    RunResult,
    list_experiments,
    run_experiment,
    with_defaults,
)
from .report import render_report, summary_frame, write_run

__all__ = [
    'EXPERIMENTS',
    'Experiment',
    'ExperimentConfig',
    'RunResult',
    'list_experiments',
    'run_experiment',
    'with_defaults',
    'render_report',
    'summary_frame',
    'write_run',
]
