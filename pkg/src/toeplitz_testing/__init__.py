"""
Toeplitz Testing Module
=======================

Goodness-of-fit tests and lag selection for sparse Toeplitz covariance
matrices of high-dimensional Gaussian vectors.
"""

from src.toeplitz_testing.errors import (
    ConfigError,
    InvalidParameterError,
    NotPositiveDefiniteError,
    ToeplitzGofError,
)
from src.toeplitz_testing.model import (
    FunctionalMatrix,
    SparseAlternative,
    ToeplitzSpec,
    densify,
    is_positive_definite,
    make_sparse_alternative,
)
from src.toeplitz_testing.estimator import DiagonalStats, SampleSet, lag_functionals
from src.toeplitz_testing.concentration import (
    ThresholdSpec,
    selector_threshold,
    separation_radius,
    theoretical_threshold,
)
from src.toeplitz_testing.sampler import MaSpec, RngStream, sample_gaussian, sample_ma_process
from src.toeplitz_testing.procedures import (
    SelectorResult,
    TestOutcome,
    aggregate_hs,
    calibrate_threshold,
    hamming_loss,
    run_test,
    select_lags,
)

__all__ = [
    "ConfigError",
    "InvalidParameterError",
    "NotPositiveDefiniteError",
    "ToeplitzGofError",
    "FunctionalMatrix",
    "SparseAlternative",
    "ToeplitzSpec",
    "densify",
    "is_positive_definite",
    "make_sparse_alternative",
    "DiagonalStats",
    "SampleSet",
    "lag_functionals",
    "ThresholdSpec",
    "selector_threshold",
    "separation_radius",
    "theoretical_threshold",
    "MaSpec",
    "RngStream",
    "sample_gaussian",
    "sample_ma_process",
    "SelectorResult",
    "TestOutcome",
    "aggregate_hs",
    "calibrate_threshold",
    "hamming_loss",
    "run_test",
    "select_lags",
]
