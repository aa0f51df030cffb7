"""Optimal and minimax-robust linear estimation of functionals of a vector stationary
sequence from noisy observations with missing intervals."""

from .exceptions import (
    ConfigError,
    DimensionMismatchError,
    FrequencyRangeError,
    GapFilterError,
    GridResolutionError,
    InfeasibleClassError,
    NotPositiveSemidefiniteError,
    PatternError,
    SingularDensityError,
)
from .filtering import FilterSolution, convergence_study, solve_filter
from .grid import DEFAULT_GRID_SIZE, Grid
from .indices import FunctionalSpec, MissingPattern, build_universe, observed_indices
from .oracle import fir_mse, oracle_mse
from .spectral import (
    ARDensity,
    ConstantDensity,
    PiecewiseDensity,
    SpectralDensity,
    autoregressive,
    check_minimality,
    covariance_from_density,
    covariance_sequence,
)

__version__ = "0.1.0"

__all__ = [
    "ARDensity",
    "ConfigError",
    "ConstantDensity",
    "DEFAULT_GRID_SIZE",
    "DimensionMismatchError",
    "FilterSolution",
    "FrequencyRangeError",
    "FunctionalSpec",
    "GapFilterError",
    "Grid",
    "GridResolutionError",
    "InfeasibleClassError",
    "MissingPattern",
    "NotPositiveSemidefiniteError",
    "PatternError",
    "PiecewiseDensity",
    "SingularDensityError",
    "SpectralDensity",
    "autoregressive",
    "build_universe",
    "check_minimality",
    "convergence_study",
    "covariance_from_density",
    "covariance_sequence",
    "fir_mse",
    "observed_indices",
    "oracle_mse",
    "solve_filter",
]
