"""Illness-death model fitting: spline bases, penalized likelihood, probabilities."""

from ._core import (
    ConfigError,
    ConvergenceError,
    DomainError,
    Error,
    FittedModel,
    IoError,
    KnotGrid,
    Model,
    NumericError,
    conditional_probability,
    constant_hazard_model,
    fit_records_csv,
    ispline_basis,
    mspline_basis,
    penalty_matrix,
    prevalence_curve,
    risk_curve,
    simulate,
    transition_probabilities,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "Error",
    "FittedModel",
    "IoError",
    "KnotGrid",
    "Model",
    "NumericError",
    "conditional_probability",
    "constant_hazard_model",
    "fit_records_csv",
    "ispline_basis",
    "mspline_basis",
    "penalty_matrix",
    "prevalence_curve",
    "risk_curve",
    "simulate",
    "transition_probabilities",
]
