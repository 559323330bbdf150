"""Penalized convolutional self-controlled case series estimation.

The heavy lifting lives in the compiled extension; this package re-exports
its surface: cohort ingestion, the Hawkes cohort simulator, the proximal
operators, and the penalized / cross-validated estimators.
"""

from ._convsccs import (
    Cohort,
    ConfigError,
    DivergenceError,
    FitResult,
    ValidationError,
    __version__,
    enforce_exposure_gaps,
    fit,
    fit_cv,
    mae,
    make_risk_profile,
    n_model_params,
    neg_log_likelihood,
    normalize_baseline,
    prox_group_l2,
    prox_tv,
    read_event_file,
    simulate_cohort,
    validate_cases,
    write_event_file,
)

__all__ = [
    "Cohort",
    "ConfigError",
    "DivergenceError",
    "FitResult",
    "ValidationError",
    "__version__",
    "enforce_exposure_gaps",
    "fit",
    "fit_cv",
    "mae",
    "make_risk_profile",
    "n_model_params",
    "neg_log_likelihood",
    "normalize_baseline",
    "prox_group_l2",
    "prox_tv",
    "read_event_file",
    "simulate_cohort",
    "validate_cases",
    "write_event_file",
]
