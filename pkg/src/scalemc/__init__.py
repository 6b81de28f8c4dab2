"""Scalable Monte Carlo: classic and stochastic-gradient MCMC, piecewise
deterministic samplers, Stein post-processing and diagnostics."""
from . import classic_mcmc, diagnostics, grad_estimators, models, pdmp, sgmcmc, stein
from .config import ExperimentConfig
from .errors import (
    ConfigError,
    DivergenceError,
    InvalidBoundError,
    NumericalFault,
    ScaleMCError,
    UnsupportedBoundError,
)
from .postprocess import SteinThinning, SteinWeights

__version__ = "0.1.0"

__all__ = [
    "classic_mcmc", "diagnostics", "grad_estimators", "models", "pdmp", "sgmcmc", "stein",
    "ExperimentConfig", "SteinThinning", "SteinWeights", "ConfigError", "DivergenceError",
    "InvalidBoundError", "NumericalFault", "ScaleMCError", "UnsupportedBoundError", "__version__",
]
