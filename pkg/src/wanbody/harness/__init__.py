"""Experiment orchestration, model comparison and the command line."""

from .analysis import (
    ModelComparison,
    WindowAverage,
    average_window,
    compare_with_model,
    write_comparison_csv,
    write_records_csv,
)
from .experiment import (
    ExperimentConfig,
    ExperimentError,
    ExperimentResult,
    StepRecord,
    initial_conditions,
    run_experiment,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentError",
    "ExperimentResult",
    "ModelComparison",
    "StepRecord",
    "WindowAverage",
    "average_window",
    "compare_with_model",
    "initial_conditions",
    "run_experiment",
    "write_comparison_csv",
    "write_records_csv",
]
