"""Shrinkage estimation for a normal mean matrix.

Closed-form and generalized Bayes (MCMC posterior mean) shrinkage
estimators under singular-value, scalar, and column-wise shrinkage
priors, with Monte Carlo machinery for Frobenius, matrix-quadratic, and
Kullback-Leibler risk comparisons, asymptotic risk-difference formulas,
and inadmissibility / minimaxity diagnostics.
"""

__version__ = "0.1.0"

from . import blockwise, core, diagnostics, estimators, mcmc, numdiff, prediction, priors, risk
from .core import (
    SvdTriple,
    frobenius_loss,
    log_likelihood,
    matrix_quadratic_loss,
    sample_observation,
    svd,
)
from .mcmc import MCMCConfig, ChainResult, importance_sampling_posterior_mean, posterior_mean_rwmh
from .priors import PriorModel
from .risk import GridSpec, RiskEstimate

__all__ = [
    "__version__",
    "blockwise",
    "core",
    "diagnostics",
    "estimators",
    "mcmc",
    "numdiff",
    "prediction",
    "priors",
    "risk",
    "SvdTriple",
    "frobenius_loss",
    "log_likelihood",
    "matrix_quadratic_loss",
    "sample_observation",
    "svd",
    "MCMCConfig",
    "ChainResult",
    "importance_sampling_posterior_mean",
    "posterior_mean_rwmh",
    "PriorModel",
    "GridSpec",
    "RiskEstimate",
]
