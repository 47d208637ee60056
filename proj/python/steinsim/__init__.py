"""Stein variational parameter inference for a planar two-link pendulum."""

from ._core import (
    Config,
    ConfigError,
    NumericalError,
    compute_metrics,
    digamma,
    estimate,
    knn_kl,
    log_likelihood,
    log_likelihood_grad,
    mmd,
    rollout,
    run_experiment,
    simulate,
    sobol_points,
)

__all__ = [
    "Config",
    "ConfigError",
    "NumericalError",
    "compute_metrics",
    "digamma",
    "estimate",
    "knn_kl",
    "log_likelihood",
    "log_likelihood_grad",
    "mmd",
    "rollout",
    "run_experiment",
    "simulate",
    "sobol_points",
]
