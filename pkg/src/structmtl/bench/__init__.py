"""Benchmark pipeline: configs, sweep runner, metrics, plots, reports."""

from .config import (
    CheckSpec,
    EstimatorSpec,
    ExperimentConfig,
    WorldSpec,
    config_from_dict,
    load_config,
)
from .metrics import (
    cluster_accuracy,
    excess_risk,
    param_error,
    subspace_error_F,
    subspace_error_op,
)
from .runner import (
    MetricRow,
    compare_baselines,
    fit_scaling_exponent,
    load_results,
    run_cell,
    run_experiment,
    summarize,
)
from .report import evaluate_checks, write_summary

__all__ = [
    "CheckSpec",
    "EstimatorSpec",
    "ExperimentConfig",
    "WorldSpec",
    "config_from_dict",
    "load_config",
    "cluster_accuracy",
    "excess_risk",
    "param_error",
    "subspace_error_F",
    "subspace_error_op",
    "MetricRow",
    "compare_baselines",
    "fit_scaling_exponent",
    "load_results",
    "run_cell",
    "run_experiment",
    "summarize",
    "evaluate_checks",
    "write_summary",
]
