"""
Experiment Harness
==================

Monte Carlo scenarios driven by an ExperimentConfig: power curves, type I
rates, lag-selection risk, the MA example, concentration checks, MS versus HS
at high sparsity and risk-bound checks. Every scenario returns a ResultTable
whose CSV form is identical for identical (config, master_seed), whatever the
worker count.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.config import ExperimentConfig
from src.toeplitz_testing.concentration import (
    ThresholdSpec,
    corollary_threshold,
    risk_bound,
    selector_threshold,
    separation_radius,
    tail_bound,
    theoretical_threshold,
)
from src.toeplitz_testing.errors import ConfigError, InvalidParameterError, NotPositiveDefiniteError
from src.toeplitz_testing.estimator import lag_functionals
from src.toeplitz_testing.model import (
    SparseAlternative,
    is_one_sided,
    make_sparse_alternative,
    pd_safe_sigma,
)
from src.toeplitz_testing.parallel import run_replications
from src.toeplitz_testing.procedures import (
    calibrate_aggregate_from_xi,
    calibrate_from_xi,
    null_xi,
    select_from_stats,
    selector_risk,
    statistic,
    statistics_from_xi,
)
from src.toeplitz_testing.sampler import MaSpec, RngStream, sample_gaussian, sample_ma_process, sample_null

logger = logging.getLogger(__name__)

# RngStream namespaces, one per family of draws
_CALIBRATION = 1
_ALTERNATIVE = 2
_FRESH_NULL = 3
_VERIFY = 4
_MA = 5
_MS_VS_HS = 6
_SELECTION = 7
_RISK = 8

PD_ATTEMPTS = 200
DEFAULT_PHI_GRID = [0.0, 0.2, 0.4, 0.6, 0.8]

POWER_COLUMNS = ["kind", "sigma", "separation", "log10_separation", "power", "se", "R"]
TYPE1_COLUMNS = ["kind", "threshold", "threshold_source", "type1", "se", "R"]
SELECTION_COLUMNS = ["n", "s", "S", "tau", "avg_hamming", "se", "R"]
MA_COLUMNS = ["p", "phi", "power", "se", "R"]
VERIFY_COLUMNS = ["u", "n", "p", "S", "w", "bound", "empirical", "se", "pass"]
MS_VS_HS_COLUMNS = ["kind", "s", "sigma", "separation", "log10_separation", "power", "se", "R"]
RISK_COLUMNS = ["kind", "u", "threshold", "sigma", "type1", "type2", "risk", "bound", "se", "R", "pass"]


@dataclass
class ResultTable:
    """Rows of (parameter point, estimate, Monte Carlo SE, count) in sweep order"""

    columns: List[str]
    rows: List[Dict] = field(default_factory=list)

    def add(self, **values) -> None:
        missing = [column for column in self.columns if column not in values]
        if missing:
            raise InvalidParameterError(f"row is missing columns {missing}")
        self.rows.append({column: values[column] for column in self.columns})

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=self.columns)

    def to_csv(self, path: Optional[str] = None) -> str:
        text = self.to_frame().to_csv(index=False, float_format="%.15g", na_rep="nan", lineterminator="\n")
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            logger.info(f"Wrote {len(self.rows)} rows to {path}")
        return text

    def __len__(self) -> int:
        return len(self.rows)


def binomial_estimate(outcomes: Sequence[Optional[bool]]) -> Tuple[float, float, int]:
    """Frequency of True among the non-None outcomes, its SE sqrt(f(1-f)/R) and R"""
    kept = [bool(outcome) for outcome in outcomes if outcome is not None]
    R = len(kept)
    if R == 0:
        return float("nan"), float("nan"), 0
    frequency = sum(kept) / R
    return frequency, math.sqrt(frequency * (1 - frequency) / R), R


def _log10(value: float) -> float:
    return math.log10(value) if value > 0 else float("-inf")


def draw_alternative(
    p: int,
    s: int,
    S: int,
    sigma: float,
    placement: str,
    two_sided: bool,
    generator: np.random.Generator,
    attempts: int = PD_ATTEMPTS,
) -> Optional[SparseAlternative]:
    """Sparse alternative conditioned on positive definiteness, None when no draw is PD"""
    if placement != "random" and not two_sided:
        attempts = 1
    for _ in range(attempts):
        try:
            return make_sparse_alternative(p, s, S, sigma, placement, two_sided, generator)
        except NotPositiveDefiniteError:
            continue
    return None


def calibration_stream(master_seed: int, n: int, p: int, S: int) -> RngStream:
    """Stream of the null draws behind every calibrated threshold at (n, p, S)"""
    return RngStream(master_seed, 0, (_CALIBRATION, n, p, S))


def default_sigma_grid(threshold: float, s: int, points: int) -> List[float]:
    """Geometric grid of separations over [t/100, min(10t, s * pd_safe_sigma(s))], as levels sigma"""
    cap = s * pd_safe_sigma(s)
    upper = min(10 * threshold, cap) if threshold > 0 else cap
    lower = threshold / 100 if threshold > 0 else cap / 1000
    if lower >= upper:
        lower = upper / 100
    return [float(separation) / s for separation in np.geomspace(lower, upper, points)]


class ThresholdBook:
    """
    Thresholds memoized per (kind, n, p, S, s) for one config.

    Calibration draws one null matrix of lag functionals per (n, p, S) and
    derives every kind's threshold from it.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self._xi: Dict[Tuple[int, int, int], np.ndarray] = {}
        self._thresholds: Dict[Tuple, float] = {}

    def null_xi(self, n: int, p: int, S: int) -> np.ndarray:
        key = (n, p, S)
        if key not in self._xi:
            stream = calibration_stream(self.config.master_seed, n, p, S)
            self._xi[key] = null_xi(n, p, S, self.config.null_R, stream, self.config.workers)
        return self._xi[key]

    def threshold(self, kind: str, n: int, p: int, S: int, s: Optional[int] = None) -> float:
        key = (kind, n, p, S, s)
        if key not in self._thresholds:
            if self.config.threshold_source == "theoretical":
                value = theoretical_threshold(ThresholdSpec(kind=kind, n=n, p=p, S=S, s=s, u=self.config.u, K=self.config.K))
            else:
                value = calibrate_from_xi(kind, self.null_xi(n, p, S), self.config.alpha, s)
            logger.info(f"{kind.upper()} threshold {value:.6g} ({self.config.threshold_source}, n={n}, p={p}, S={S}, s={s})")
            self._thresholds[key] = value
        return self._thresholds[key]

    def aggregate(self, n: int, p: int, S: int, s_grid: Sequence[int]) -> List[float]:
        if self.config.threshold_source == "theoretical":
            return [self.threshold("hs", n, p, S, s) for s in s_grid]
        return calibrate_aggregate_from_xi(
            self.null_xi(n, p, S), s_grid, self.config.alpha, self.config.aggregate_mode
        )


def _power_point(
    config: ExperimentConfig,
    kind: str,
    n: int,
    p: int,
    S: int,
    s: int,
    sigma: float,
    threshold: float,
    stream: RngStream,
) -> Tuple[float, float, int]:
    two_sided = not is_one_sided(kind)

    def replicate(generator: np.random.Generator, r: int) -> Optional[bool]:
        if sigma == 0:
            samples = sample_null(n, p, generator)
        else:
            alternative = draw_alternative(p, s, S, sigma, config.placement, two_sided, generator)
            if alternative is None:
                return None
            samples = sample_gaussian(alternative.spec, n, generator)
        return statistic(kind, lag_functionals(samples, S), s) >= threshold

    return binomial_estimate(run_replications(replicate, config.R, stream, config.workers))


def _warn_if_skipped(label: str, R_kept: int, R: int) -> None:
    if R_kept == 0:
        logger.warning(f"{label}: no positive definite alternative in {PD_ATTEMPTS} draws, row left empty")
    elif R_kept < R:
        logger.warning(f"{label}: {R - R_kept} of {R} replications had no positive definite alternative")


def run_power_curve(config: ExperimentConfig) -> ResultTable:
    """Rejection frequency of each test kind over a grid of signal levels"""
    sweep = config.p_values is not None
    table = ResultTable((["p"] if sweep else []) + POWER_COLUMNS)
    book = ThresholdBook(config)
    n = config.n
    for p in config.p_values or [config.p]:
        S = config.horizon(p)
        s = config.sparsity(S)
        for kind_index, kind in enumerate(config.kinds):
            threshold = book.threshold(kind, n, p, S, s)
            grid = config.sigma_grid or default_sigma_grid(threshold, s, config.grid_points)
            for grid_index, sigma in enumerate(grid):
                stream = RngStream(config.master_seed, grid_index, (_ALTERNATIVE, p, kind_index))
                power, se, R = _power_point(config, kind, n, p, S, s, sigma, threshold, stream)
                _warn_if_skipped(f"{kind.upper()} p={p} sigma={sigma:.6g}", R, config.R)
                row = dict(kind=kind, sigma=sigma, separation=s * sigma, log10_separation=_log10(s * sigma),
                           power=power, se=se, R=R)
                if sweep:
                    row["p"] = p
                table.add(**row)
            logger.info(f"Power curve done for {kind.upper()} (n={n}, p={p}, S={S}, s={s})")
    return table


def run_type1(config: ExperimentConfig) -> ResultTable:
    """Null rejection rate of every kind on fresh replications, away from the calibration draws"""
    table = ResultTable(TYPE1_COLUMNS)
    book = ThresholdBook(config)
    n, p = config.n, config.p
    S = config.horizon(p)
    s = config.sparsity(S)
    thresholds = {kind: book.threshold(kind, n, p, S, s) for kind in config.kinds}
    stream = RngStream(config.master_seed, 0, (_FRESH_NULL, n, p, S))
    fresh = null_xi(n, p, S, config.R, stream, config.workers)
    for kind in config.kinds:
        rate, se, R = binomial_estimate(statistics_from_xi(kind, fresh, s) >= thresholds[kind])
        table.add(kind=kind, threshold=thresholds[kind], threshold_source=config.threshold_source,
                  type1=rate, se=se, R=R)
    return table


def run_selection_risk(config: ExperimentConfig) -> ResultTable:
    """Average Hamming loss of the lag selector at sigma = sigma_factor * tau_n over a sweep of n"""
    table = ResultTable(SELECTION_COLUMNS)
    p = config.p
    S = config.horizon(p)
    s = config.sparsity(S)
    if s >= S:
        raise ConfigError(f"the lag selector needs s < S, got s={s}, S={S}")
    u = config.u if config.u is not None else 2.0
    for n_index, n in enumerate(config.n_values or [config.n]):
        tau = selector_threshold(n, p, S, s, u)
        if tau <= 0:
            raise ConfigError(
                f"the selector threshold tau_n is 0 at s={s}, S={S} (log s = log(S - s) = 0), "
                f"so sigma = sigma_factor * tau_n gives no signal; pick S - s >= 2 or s >= 2"
            )
        sigma = config.sigma_factor * tau
        two_sided = not config.one_sided

        def replicate(generator: np.random.Generator, r: int):
            alternative = draw_alternative(p, s, S, sigma, config.placement, two_sided, generator)
            if alternative is None:
                return None
            samples = sample_gaussian(alternative.spec, n, generator)
            return select_from_stats(lag_functionals(samples, S), tau, config.one_sided).eta_hat, alternative.eta()

        stream = RngStream(config.master_seed, n_index, (_SELECTION, p, S, s))
        outcomes = [o for o in run_replications(replicate, config.R, stream, config.workers) if o is not None]
        _warn_if_skipped(f"selector n={n} sigma={sigma:.6g}", len(outcomes), config.R)
        if outcomes:
            eta_hat, eta_true = (np.vstack(column) for column in zip(*outcomes))
            average, se = selector_risk(eta_hat, eta_true)
            R = len(outcomes)
        else:
            average, se, R = float("nan"), float("nan"), 0
        logger.info(f"Selector n={n}: tau={tau:.6g}, average Hamming loss {average:.4g}")
        table.add(n=n, s=s, S=S, tau=tau, avg_hamming=average, se=se, R=R)
    return table


def run_ma_experiment(config: ExperimentConfig) -> ResultTable:
    """Power of the MS test against windows of the MA(floor(p/4)) example process"""
    table = ResultTable(MA_COLUMNS)
    book = ThresholdBook(config)
    n = config.n
    for p in config.p_values or [config.p]:
        S = config.horizon(p)
        threshold = book.threshold("ms", n, p, S)
        for phi_index, phi in enumerate(config.phi_grid or DEFAULT_PHI_GRID):
            spec = MaSpec(phi=phi, p=p)

            def replicate(generator: np.random.Generator, r: int) -> bool:
                stats = lag_functionals(sample_ma_process(spec, n, generator), S)
                return statistic("ms", stats) >= threshold

            stream = RngStream(config.master_seed, phi_index, (_MA, n, p))
            power, se, R = binomial_estimate(run_replications(replicate, config.R, stream, config.workers))
            table.add(p=p, phi=phi, power=power, se=se, R=R)
        logger.info(f"MA experiment done for p={p} (S={S})")
    return table


def run_verify_concentration(config: ExperimentConfig) -> ResultTable:
    """Null tail frequency of sum_{j in W} xi_j against exp(-u/4), doubled for |.|"""
    table = ResultTable(VERIFY_COLUMNS)
    for n in config.n_values or [config.n]:
        for p in config.p_values or [config.p]:
            S = config.horizon(p)
            w = min(config.w or S, S)
            stream = RngStream(config.master_seed, 0, (_VERIFY, n, p, S))
            totals = null_xi(n, p, S, config.R, stream, config.workers)[:, :w].sum(axis=1)
            values = np.abs(totals) if config.two_sided else totals
            for u in config.u_grid:
                t = corollary_threshold(u, w, n, p, S, config.K)
                bound = tail_bound(u, config.two_sided)
                empirical, se, R = binomial_estimate(values >= t)
                table.add(u=u, n=n, p=p, S=S, w=w, bound=bound, empirical=empirical, se=se,
                          **{"pass": bool(empirical <= bound + 3 * se)})
    return table


def run_ms_vs_hs(config: ExperimentConfig) -> ResultTable:
    """MS, HS with known s and HS aggregated over s_grid, on the same two-sided alternatives"""
    table = ResultTable(MS_VS_HS_COLUMNS)
    book = ThresholdBook(config)
    n, p = config.n, config.p
    S = config.horizon(p)
    s_grid = sorted({min(g, S) for g in config.s_grid})
    aggregate_thresholds = book.aggregate(n, p, S, s_grid)
    ms_threshold = book.threshold("ms", n, p, S)
    for s_index, s in enumerate(config.s_values or [config.sparsity(S)]):
        if not 1 <= s <= S:
            raise ConfigError(f"true sparsity {s} must satisfy 1 <= s <= S={S}")
        hs_threshold = book.threshold("hs", n, p, S, s)
        grid = config.sigma_grid or default_sigma_grid(ms_threshold, s, config.grid_points)
        results: Dict[str, List[Tuple[float, float, float, int]]] = {"ms": [], "hs": [], "hs-aggregate": []}
        for grid_index, sigma in enumerate(grid):

            def replicate(generator: np.random.Generator, r: int):
                if sigma == 0:
                    samples = sample_null(n, p, generator)
                else:
                    alternative = draw_alternative(p, s, S, sigma, config.placement, True, generator)
                    if alternative is None:
                        return None
                    samples = sample_gaussian(alternative.spec, n, generator)
                stats = lag_functionals(samples, S)
                margin = max(statistic("hs", stats, g) - t for g, t in zip(s_grid, aggregate_thresholds))
                return (
                    statistic("ms", stats) >= ms_threshold,
                    statistic("hs", stats, s) >= hs_threshold,
                    margin >= 0,
                )

            stream = RngStream(config.master_seed, grid_index, (_MS_VS_HS, n, p, s_index))
            outcomes = run_replications(replicate, config.R, stream, config.workers)
            for position, kind in enumerate(results):
                estimate = binomial_estimate([None if o is None else o[position] for o in outcomes])
                results[kind].append((sigma,) + estimate)
            _warn_if_skipped(f"s={s} sigma={sigma:.6g}", results["ms"][-1][3], config.R)
        for kind, rows in results.items():
            for sigma, power, se, R in rows:
                table.add(kind=kind, s=s, sigma=sigma, separation=s * sigma,
                          log10_separation=_log10(s * sigma), power=power, se=se, R=R)
        logger.info(f"MS vs HS done for s={s} (grid {s_grid}, mode {config.aggregate_mode})")
    return table


def run_risk_check(config: ExperimentConfig) -> ResultTable:
    """Type I + type II error at theoretical thresholds and sigma = separation radius, against the risk bound"""
    table = ResultTable(RISK_COLUMNS)
    n, p = config.n, config.p
    S = config.horizon(p)
    s = config.sparsity(S)
    null_stream = RngStream(config.master_seed, 0, (_RISK, n, p, S))
    fresh = null_xi(n, p, S, config.R, null_stream, config.workers)
    for kind_index, kind in enumerate(config.kinds):
        spec = ThresholdSpec(kind=kind, n=n, p=p, S=S, s=s, u=config.u, K=config.K)
        threshold = theoretical_threshold(spec)
        sigma = separation_radius(spec)
        type1, se1, R1 = binomial_estimate(statistics_from_xi(kind, fresh, s) >= threshold)
        stream = RngStream(config.master_seed, kind_index + 1, (_RISK, n, p, S))
        power, se2, R2 = _power_point(config, kind, n, p, S, s, sigma, threshold, stream)
        type2 = 1 - power
        risk = type1 + type2
        se = math.sqrt(se1 ** 2 + se2 ** 2)
        bound = risk_bound(spec)
        if R2 == 0:
            # no type II estimate, so the bound is not checked
            logger.warning(
                f"{kind.upper()}: separation radius {sigma:.6g} puts every draw of F({s}, {S}, sigma) outside "
                f"the positive definite cone, risk bound left unchecked"
            )
            passed = float("nan")
        else:
            _warn_if_skipped(f"{kind.upper()} at separation radius {sigma:.6g}", R2, config.R)
            passed = bool(risk <= bound + 3 * se)
        table.add(kind=kind, u=spec.u, threshold=threshold, sigma=sigma, type1=type1, type2=type2,
                  risk=risk, bound=bound, se=se, R=min(R1, R2), **{"pass": passed})
    return table


SCENARIO_RUNNERS: Dict[str, Callable[[ExperimentConfig], ResultTable]] = {
    "power_curve": run_power_curve,
    "type1": run_type1,
    "selection_risk": run_selection_risk,
    "ma_power": run_ma_experiment,
    "verify_concentration": run_verify_concentration,
    "ms_vs_hs": run_ms_vs_hs,
    "risk_check": run_risk_check,
}


def run_experiment(config: ExperimentConfig) -> ResultTable:
    logger.info(f"Running scenario '{config.scenario}' (seed={config.master_seed}, workers={config.workers})")
    return SCENARIO_RUNNERS[config.scenario](config)
