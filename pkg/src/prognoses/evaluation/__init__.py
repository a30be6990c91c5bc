"""Nested cross-validation, weighted F1 and bootstrap confidence intervals."""
from .bootstrap import bootstrap_ci
from .config import ConfigError, ExperimentConfig
from .folds import FoldPlan, make_outer_folds
from .metrics import weighted_f1
from .nested import AccessLog, EvaluationError, EvaluationReport, Prediction, format_cell, nested_cv

__all__ = [
    "AccessLog",
    "ConfigError",
    "EvaluationError",
    "EvaluationReport",
    "ExperimentConfig",
    "FoldPlan",
    "Prediction",
    "bootstrap_ci",
    "format_cell",
    "make_outer_folds",
    "nested_cv",
    "weighted_f1",
]
