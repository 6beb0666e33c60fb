"""Numerical laboratory for scaling limits of iterated fractional integrals.

For a d-dimensional fractional Brownian motion with Hurst index H > 1/2,
the q-fold iterated integral with outer weight s^{-qH}, run out to time
k^t and divided by sqrt(log k), converges as k grows to a Brownian motion
with an explicit variance rate sigma_q^2(H). This package simulates the
integrals, evaluates the limit constants by deterministic and Monte Carlo
quadrature, and measures how fast the convergence happens.
"""

from . import errors
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    FbmcltError,
    NumericalError,
    PartialReportError,
)
from .experiments import (
    ExperimentConfig,
    KBlock,
    McReport,
    fourth_moment_gap,
    ks_critical_value,
    ks_normal,
    rate_probe,
    run_experiment,
    simulate_winding_samples,
    simulate_x_samples,
    stein_tv_bound,
    tightness_probe,
)
from .fbm import (
    FbmPathSet,
    FbmSampler,
    Hurst,
    TimeGrid,
    as_hurst,
    covariance,
    covariance_matrix,
    paths_to_csv,
    sample_fbm,
    simulation_grid,
)
from .iterated import IterConfig, IterIntegralEstimate, iterated_integral, winding_functional
from .quadratures import (
    QuadResult,
    contraction_norm_q2,
    lemma41_integral,
    sigma2_squared,
    sigmaq_squared,
    variance_oracle,
    variance_oracle_mc,
)
from .rng import derive_key, derive_seed, generator

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ConvergenceError",
    "DomainError",
    "ExperimentConfig",
    "FbmPathSet",
    "FbmSampler",
    "FbmcltError",
    "Hurst",
    "IterConfig",
    "IterIntegralEstimate",
    "KBlock",
    "McReport",
    "NumericalError",
    "PartialReportError",
    "QuadResult",
    "TimeGrid",
    "as_hurst",
    "contraction_norm_q2",
    "covariance",
    "covariance_matrix",
    "derive_key",
    "derive_seed",
    "errors",
    "fourth_moment_gap",
    "generator",
    "iterated_integral",
    "ks_critical_value",
    "ks_normal",
    "lemma41_integral",
    "paths_to_csv",
    "rate_probe",
    "run_experiment",
    "sample_fbm",
    "sigma2_squared",
    "sigmaq_squared",
    "simulate_winding_samples",
    "simulate_x_samples",
    "simulation_grid",
    "stein_tv_bound",
    "tightness_probe",
    "variance_oracle",
    "variance_oracle_mc",
    "winding_functional",
    "__version__",
]
