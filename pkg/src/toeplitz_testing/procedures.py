"""
Test Procedures and Lag Selection
=================================

The MS+, MS, HS+ and HS tests of H0: Sigma = I_p, aggregation of scan tests
over a sparsity grid, null calibration of thresholds by empirical quantiles,
and the thresholding lag selector with its Hamming loss.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.toeplitz_testing.concentration import ThresholdSpec, theoretical_threshold
from src.toeplitz_testing.errors import InvalidParameterError
from src.toeplitz_testing.estimator import (
    DiagonalStats,
    SampleSet,
    lag_functionals,
    scan_statistics,
    sum_statistics,
    validate_horizon,
)
from src.toeplitz_testing.model import is_one_sided, is_scan, normalize_kind
from src.toeplitz_testing.parallel import run_replications
from src.toeplitz_testing.sampler import RngStream, sample_null

logger = logging.getLogger(__name__)

THRESHOLD_SOURCES = ("theoretical", "calibrated")
AGGREGATE_MODES = ("bonferroni", "joint")
# "given" marks a threshold supplied by the caller
OUTCOME_SOURCES = THRESHOLD_SOURCES + ("given",)


@dataclass(frozen=True)
class TestOutcome:
    kind: str
    statistic: float
    threshold: float
    reject: bool
    threshold_source: str = "theoretical"
    s: Optional[int] = None

    # keep pytest from collecting this class
    __test__ = False

    def summary(self) -> str:
        verdict = "reject H0" if self.reject else "accept H0"
        sparsity = f" s={self.s}" if self.s is not None else ""
        return (
            f"{self.kind.upper()}{sparsity}: statistic={self.statistic:.6g} "
            f"threshold={self.threshold:.6g} ({self.threshold_source}) -> {verdict}"
        )


@dataclass(frozen=True)
class SelectorResult:
    eta_hat: np.ndarray
    tau: float
    one_sided: bool

    def selected_lags(self) -> List[int]:
        return [int(j) + 1 for j in np.flatnonzero(self.eta_hat)]


def _check_sparsity(kind: str, S: int, s: Optional[int]) -> None:
    if is_scan(kind):
        if s is None:
            raise InvalidParameterError(f"{kind.upper()} needs the sparsity s")
        if not 1 <= s <= S:
            raise InvalidParameterError(f"sparsity s={s} must satisfy 1 <= s <= S={S}")


def statistics_from_xi(kind: str, xi: np.ndarray, s: Optional[int] = None) -> np.ndarray:
    """Test statistic of every row of an (R, S) matrix of lag functionals"""
    kind = normalize_kind(kind)
    absolute = not is_one_sided(kind)
    if is_scan(kind):
        _check_sparsity(kind, np.shape(xi)[-1], s)
        return scan_statistics(xi, s, absolute)
    return sum_statistics(xi, absolute)


def statistic(kind: str, stats: DiagonalStats, s: Optional[int] = None) -> float:
    return float(statistics_from_xi(kind, stats.xi, s)[0])


def decide(
    kind: str,
    stats: DiagonalStats,
    threshold: float,
    s: Optional[int] = None,
    threshold_source: str = "theoretical",
) -> TestOutcome:
    """Reject H0 when the statistic reaches the threshold"""
    kind = normalize_kind(kind)
    if threshold < 0:
        raise InvalidParameterError(f"threshold must be non-negative, got {threshold}")
    if threshold_source not in OUTCOME_SOURCES:
        raise InvalidParameterError(f"threshold source must be one of {OUTCOME_SOURCES}")
    value = statistic(kind, stats, s)
    return TestOutcome(
        kind=kind,
        statistic=value,
        threshold=float(threshold),
        reject=bool(value >= threshold),
        threshold_source=threshold_source,
        s=s if is_scan(kind) else None,
    )


def run_test(
    kind: str,
    samples: SampleSet,
    S: int,
    threshold: float,
    s: Optional[int] = None,
    threshold_source: str = "theoretical",
) -> TestOutcome:
    validate_horizon(samples.p, S)
    _check_sparsity(normalize_kind(kind), S, s)
    return decide(kind, lag_functionals(samples, S), threshold, s, threshold_source)


def aggregate_from_stats(
    stats: DiagonalStats,
    s_grid: Sequence[int],
    thresholds: Sequence[float],
    kind: str = "hs",
    threshold_source: str = "calibrated",
) -> TestOutcome:
    """
    Reject when any scan test of the grid rejects.

    The reported statistic is max_s (statistic_s - threshold_s), compared with 0.
    """
    kind = normalize_kind(kind)
    if not is_scan(kind):
        raise InvalidParameterError("aggregation applies to the HS and HS+ scan tests")
    if len(s_grid) == 0:
        raise InvalidParameterError("the sparsity grid must not be empty")
    if len(s_grid) != len(thresholds):
        raise InvalidParameterError(
            f"got {len(thresholds)} thresholds for a sparsity grid of {len(s_grid)} values"
        )
    margins = [statistic(kind, stats, s) - t for s, t in zip(s_grid, thresholds)]
    margin = max(margins)
    return TestOutcome(
        kind=f"{kind}-aggregate",
        statistic=float(margin),
        threshold=0.0,
        reject=bool(margin >= 0),
        threshold_source=threshold_source,
    )


def aggregate_hs(
    samples: SampleSet,
    S: int,
    s_grid: Sequence[int],
    thresholds_per_s: Sequence[float],
    kind: str = "hs",
    threshold_source: str = "calibrated",
) -> TestOutcome:
    validate_horizon(samples.p, S)
    for s in s_grid:
        _check_sparsity(kind, S, s)
    return aggregate_from_stats(lag_functionals(samples, S), s_grid, thresholds_per_s, kind, threshold_source)


def null_xi(n: int, p: int, S: int, R: int, rng: RngStream, workers: int = 1) -> np.ndarray:
    """(R, S) matrix of lag functionals simulated under Sigma = I_p"""
    validate_horizon(p, S)

    def replicate(generator: np.random.Generator, r: int) -> np.ndarray:
        return lag_functionals(sample_null(n, p, generator), S).xi

    logger.info(f"Simulating {R} null replications (n={n}, p={p}, S={S})")
    return np.vstack(run_replications(replicate, R, rng, workers))


def order_statistic_index(R: int, alpha: float) -> int:
    """1-based index ceil((1 - alpha) R), evaluated as R - floor(alpha R)"""
    if not 0 < alpha < 1:
        raise InvalidParameterError(f"alpha must lie in (0, 1), got {alpha}")
    if R < 1:
        raise InvalidParameterError(f"number of replications must be at least 1, got {R}")
    return max(1, R - int(math.floor(alpha * R + 1e-9)))


def empirical_quantile(values: np.ndarray, alpha: float) -> float:
    """ceil((1 - alpha) R)-th smallest value, no interpolation"""
    ordered = np.sort(np.asarray(values, dtype=float))
    return float(ordered[order_statistic_index(ordered.size, alpha) - 1])


def calibrate_from_xi(kind: str, xi: np.ndarray, alpha: float, s: Optional[int] = None) -> float:
    return empirical_quantile(statistics_from_xi(kind, xi, s), alpha)


def calibrate_threshold(
    kind: str,
    n: int,
    p: int,
    S: int,
    s: Optional[int] = None,
    alpha: float = 0.1,
    R: int = 5000,
    rng: Optional[RngStream] = None,
    workers: int = 1,
) -> float:
    """Empirical (1 - alpha)-quantile of the statistic over R null replications"""
    kind = normalize_kind(kind)
    _check_sparsity(kind, S, s)
    order_statistic_index(R, alpha)
    xi = null_xi(n, p, S, R, rng or RngStream(0), workers)
    threshold = calibrate_from_xi(kind, xi, alpha, s)
    logger.info(f"Calibrated {kind.upper()} threshold {threshold:.6g} (n={n}, p={p}, S={S}, s={s}, alpha={alpha})")
    return threshold


def _upper_tail_pvalues(values: np.ndarray) -> np.ndarray:
    ordered = np.sort(values)
    return (values.size - np.searchsorted(ordered, values, side="left")) / values.size


def calibrate_aggregate_from_xi(
    xi: np.ndarray,
    s_grid: Sequence[int],
    alpha: float,
    mode: str = "bonferroni",
    kind: str = "hs",
) -> List[float]:
    """
    Member thresholds of the aggregated scan test.

    bonferroni: each member at level alpha / |grid|.
    joint: min-p calibration; the common member level alpha' is the largest
    per-replication minimum p-value whose null frequency stays within alpha.
    """
    if mode not in AGGREGATE_MODES:
        raise InvalidParameterError(f"aggregation mode must be one of {AGGREGATE_MODES}, got '{mode}'")
    if len(s_grid) == 0:
        raise InvalidParameterError("the sparsity grid must not be empty")
    members = np.column_stack([statistics_from_xi(kind, xi, s) for s in s_grid])
    R = members.shape[0]
    if mode == "bonferroni":
        level = alpha / len(s_grid)
    else:
        order_statistic_index(R, alpha)
        min_p = np.min(np.column_stack([_upper_tail_pvalues(column) for column in members.T]), axis=1)
        candidates = np.unique(min_p)
        admissible = [c for c in candidates if np.count_nonzero(min_p <= c) <= alpha * R + 1e-9]
        level = float(admissible[-1]) if admissible else 1.0 / R
        level = float(np.clip(level, 0.5 / R, 1.0 - 0.5 / R))
    return [empirical_quantile(column, level) for column in members.T]


def calibrate_aggregate(
    n: int,
    p: int,
    S: int,
    s_grid: Sequence[int],
    alpha: float = 0.1,
    R: int = 5000,
    rng: Optional[RngStream] = None,
    mode: str = "bonferroni",
    workers: int = 1,
    kind: str = "hs",
) -> List[float]:
    for s in s_grid:
        _check_sparsity(normalize_kind(kind), S, s)
    xi = null_xi(n, p, S, R, rng or RngStream(0), workers)
    return calibrate_aggregate_from_xi(xi, s_grid, alpha, mode, kind)


def resolve_threshold(
    kind: str,
    n: int,
    p: int,
    S: int,
    s: Optional[int] = None,
    source: str = "theoretical",
    u: Optional[float] = None,
    alpha: float = 0.1,
    R: int = 5000,
    rng: Optional[RngStream] = None,
    workers: int = 1,
) -> float:
    """Closed-form threshold or null-calibrated one"""
    if source == "theoretical":
        return theoretical_threshold(ThresholdSpec(kind=kind, n=n, p=p, S=S, s=s, u=u))
    if source == "calibrated":
        return calibrate_threshold(kind, n, p, S, s, alpha, R, rng, workers)
    raise InvalidParameterError(f"threshold source must be one of {THRESHOLD_SOURCES}, got '{source}'")


def select_from_stats(stats: DiagonalStats, tau: float, one_sided: bool = False) -> SelectorResult:
    """eta_hat_j = 1(|xi_j| > tau), or 1(xi_j > tau) for the one-sided selector"""
    if tau <= 0:
        raise InvalidParameterError(f"selector threshold must be positive, got {tau}")
    values = stats.xi if one_sided else np.abs(stats.xi)
    eta_hat = (values > tau).astype(int)
    eta_hat.flags.writeable = False
    return SelectorResult(eta_hat=eta_hat, tau=float(tau), one_sided=one_sided)


def select_lags(samples: SampleSet, S: int, tau: float, one_sided: bool = False) -> SelectorResult:
    return select_from_stats(lag_functionals(samples, S), tau, one_sided)


def hamming_loss(eta_hat: Sequence[int], eta_true: Sequence[int]) -> int:
    """Number of lags whose selection indicator is wrong"""
    eta_hat = np.asarray(eta_hat, dtype=int)
    eta_true = np.asarray(eta_true, dtype=int)
    if eta_hat.shape != eta_true.shape:
        raise InvalidParameterError(f"indicator lengths differ: {eta_hat.size} vs {eta_true.size}")
    return int(np.sum(np.abs(eta_hat - eta_true)))


def selector_risk(eta_hat_matrix: np.ndarray, eta_true: np.ndarray) -> Tuple[float, float]:
    """
    Average Hamming loss over the rows of eta_hat_matrix and its Monte Carlo
    standard error. eta_true is one indicator vector or one row per replication.
    """
    eta_hat_matrix = np.atleast_2d(np.asarray(eta_hat_matrix, dtype=int))
    eta_true = np.broadcast_to(np.asarray(eta_true, dtype=int), eta_hat_matrix.shape)
    losses = np.array([hamming_loss(row, truth) for row, truth in zip(eta_hat_matrix, eta_true)], dtype=float)
    R = losses.size
    se = float(np.std(losses, ddof=1) / math.sqrt(R)) if R > 1 else 0.0
    return float(math.fsum(losses) / R), se
