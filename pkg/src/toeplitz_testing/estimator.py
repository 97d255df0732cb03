"""
Lag Functional Estimator
========================

Empirical lag functionals xi_j = Tr(A_j Sigma_n) computed straight from the
samples, and the sum and scan statistics built on them.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.toeplitz_testing.errors import InvalidParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """n observed p-dimensional vectors stored as an (n, p) array"""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidParameterError(f"samples must be an (n, p) array with n, p >= 1, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidParameterError("samples contain non-finite values")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def p(self) -> int:
        return int(self.data.shape[1])


@dataclass(frozen=True, eq=False)
class DiagonalStats:
    """Estimated lag functionals (xi_1, ..., xi_S) and xi_0"""

    xi: np.ndarray
    xi0: float

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float).ravel()
        if xi.size < 1 or not np.all(np.isfinite(xi)):
            raise InvalidParameterError("xi must be a non-empty finite vector")
        xi.flags.writeable = False
        object.__setattr__(self, "xi", xi)

    @property
    def S(self) -> int:
        return int(self.xi.size)


def validate_horizon(p: int, S: int) -> None:
    if S < 1 or 2 * S >= p:
        raise InvalidParameterError(f"horizon S={S} must satisfy 1 <= S < p/2 (p={p})")


def _lag_sum(data: np.ndarray, j: int) -> float:
    # pairwise sums within each observation, compensated across observations
    if j == 0:
        row_sums = np.einsum("ij,ij->i", data, data)
    else:
        row_sums = np.einsum("ij,ij->i", data[:, :-j], data[:, j:])
    return math.fsum(row_sums)


def lag_functionals(samples: SampleSet, S: int, studentize: bool = False) -> DiagonalStats:
    """
    xi_j = (1 / (n (p - j))) sum_k sum_i X_k^i X_k^{i+j} for j = 1..S.

    Runs in O(n p S) without forming A_j or Sigma_n. With studentize=True every
    xi_j is divided by xi_0 (real data whose variance is not 1).
    """
    validate_horizon(samples.p, S)
    n, p = samples.n, samples.p
    xi0 = _lag_sum(samples.data, 0) / (n * p)
    xi = np.array([_lag_sum(samples.data, j) / (n * (p - j)) for j in range(1, S + 1)])
    if studentize:
        if xi0 <= 0:
            raise InvalidParameterError("cannot studentize samples with zero empirical variance")
        xi = xi / xi0
    return DiagonalStats(xi=xi, xi0=xi0)


def _as_matrix(xi: np.ndarray) -> np.ndarray:
    matrix = np.asarray(xi, dtype=float)
    return matrix[np.newaxis, :] if matrix.ndim == 1 else matrix


def sum_statistics(xi: np.ndarray, absolute: bool) -> np.ndarray:
    """Row-wise sum statistic for an (R, S) matrix of xi vectors"""
    values = np.abs(_as_matrix(xi)) if absolute else _as_matrix(xi)
    return np.array([math.fsum(row) for row in values])


def scan_statistics(xi: np.ndarray, s: int, absolute: bool) -> np.ndarray:
    """Row-wise sum of the s largest (absolute) xi values for an (R, S) matrix"""
    values = np.abs(_as_matrix(xi)) if absolute else _as_matrix(xi)
    if s < 1 or s > values.shape[1]:
        raise InvalidParameterError(f"sparsity s={s} must satisfy 1 <= s <= S={values.shape[1]}")
    top = -np.sort(-values, axis=1)[:, :s]
    return np.array([math.fsum(row) for row in top])


def sum_statistic(stats: DiagonalStats, absolute: bool) -> float:
    """sum_j xi_j (MS+ statistic) or sum_j |xi_j| (MS statistic)"""
    return float(sum_statistics(stats.xi, absolute)[0])


def scan_statistic(stats: DiagonalStats, s: int, absolute: bool) -> float:
    """xi_(1) + ... + xi_(s), the maximum subset sum over all size-s lag sets"""
    return float(scan_statistics(stats.xi, s, absolute)[0])


def scan_support(stats: DiagonalStats, s: int, absolute: bool) -> Tuple[int, ...]:
    """Lags attaining the scan maximum; ties go to the smaller lag"""
    if s < 1 or s > stats.S:
        raise InvalidParameterError(f"sparsity s={s} must satisfy 1 <= s <= S={stats.S}")
    values = np.abs(stats.xi) if absolute else stats.xi
    order = np.argsort(-values, kind="stable")
    return tuple(sorted(int(j) + 1 for j in order[:s]))
