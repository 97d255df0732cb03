"""
Concentration Bounds and Thresholds
===================================

Sub-exponential parameters of the lag functionals, Bernstein-type thresholds,
norm bounds on A_W Sigma, and the closed-form thresholds, separation radii and
risk bounds of the four tests and the lag selector.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from src.toeplitz_testing.errors import InvalidParameterError
from src.toeplitz_testing.model import FunctionalMatrix, ToeplitzSpec, densify, normalize_kind

logger = logging.getLogger(__name__)

THRESHOLD_KINDS = ("ms+", "ms", "hs+", "hs", "selector")

DEFAULT_K = 0.5
DEFAULT_U = {"ms+": 8.0, "ms": 2.0, "hs+": 2.0, "hs": 2.0, "selector": 2.0}


def _canonical(kind: str) -> str:
    if str(kind).strip().lower() == "selector":
        return "selector"
    return normalize_kind(kind)


def _check_K(K: float) -> None:
    if not 0 < K < 1:
        raise InvalidParameterError(f"split constant K must lie in (0, 1), got {K}")


def log_binomial(S: int, s: int) -> float:
    """log C(S, s) through log-gamma, clamped at 0"""
    return max(0.0, float(gammaln(S + 1) - gammaln(s + 1) - gammaln(S - s + 1)))


@dataclass(frozen=True)
class SubExpParams:
    nu2: float
    b: float

    @property
    def degenerate(self) -> bool:
        return self.nu2 <= 0 or self.b <= 0


def subexp_params(frob2: float, op: float, n: int, K: float = DEFAULT_K) -> SubExpParams:
    """nu^2 = 2 ||A Sigma||_F^2 / (n (1 - K)) and b = 2 ||A Sigma||_inf / (n K)"""
    _check_K(K)
    if frob2 < 0 or op < 0 or n < 1:
        raise InvalidParameterError(f"need frob2 >= 0, op >= 0, n >= 1 (got {frob2}, {op}, {n})")
    params = SubExpParams(nu2=2 * frob2 / (n * (1 - K)), b=2 * op / (n * K))
    if params.degenerate:
        logger.warning(f"Degenerate sub-exponential parameters {params}")
    return params


def bernstein_threshold(params: SubExpParams, u: float) -> float:
    """t_u = max(nu sqrt(u), b u), so that P[Z >= t_u] <= exp(-u/2)"""
    if u <= 0:
        raise InvalidParameterError(f"u must be positive, got {u}")
    return max(math.sqrt(params.nu2 * u), params.b * u)


@dataclass(frozen=True)
class NormBounds:
    op_bound: float
    frob2_bound: float
    kappa: float


def norm_bounds(
    w: int,
    s: int,
    S: int,
    p: int,
    sigma0: float = 1.0,
    singleton: Optional[bool] = None,
    location: str = "early",
) -> NormBounds:
    """Bounds on ||A_W Sigma||_inf and ||A_W Sigma||_F^2 for Sigma in F(s, S, sigma)"""
    if not (1 <= w <= S < p) or s < 0:
        raise InvalidParameterError(f"need 1 <= w <= S < p and s >= 0 (got w={w}, S={S}, p={p}, s={s})")
    if location not in ("early", "late"):
        raise InvalidParameterError(f"location must be 'early' or 'late', got '{location}'")
    if singleton is None:
        singleton = w == 1
    if singleton and w != 1:
        raise InvalidParameterError(f"a singleton W has w = 1, got w={w}")
    kappa = 1.0 if location == "early" else p / 2
    op_bound = sigma0 * w * (2 * s + 1) / (p - S)
    if singleton:
        frob2_bound = sigma0 ** 2 * kappa * (2 * s + 1) / (p - S)
    else:
        frob2_bound = sigma0 ** 2 * w * (2 * s + 1) ** 2 / (2 * (p - S))
    return NormBounds(op_bound=op_bound, frob2_bound=frob2_bound, kappa=kappa)


def functional_norm_bounds(w: int, S: int, p: int) -> Tuple[float, float]:
    """Bounds on ||A_W||_inf and ||A_W||_F^2 alone"""
    if not (1 <= w <= S < p):
        raise InvalidParameterError(f"need 1 <= w <= S < p (got w={w}, S={S}, p={p})")
    return w / (p - S), w / (2 * (p - S))


def exact_norms(lags: Sequence[int], spec: ToeplitzSpec) -> Tuple[float, float]:
    """Spectral norm and squared Frobenius norm of A_W Sigma, computed densely"""
    product = FunctionalMatrix(spec.p, tuple(lags)).dense() @ densify(spec)
    return float(np.linalg.norm(product, 2)), float(np.sum(product ** 2))


def tail_bound(u: float, two_sided: bool = False) -> float:
    """exp(-u/4), doubled for absolute values"""
    return (2.0 if two_sided else 1.0) * math.exp(-u / 4)


def _denominator(n: int, p: int, S: int) -> float:
    if n < 1 or S < 1 or 2 * S >= p:
        raise InvalidParameterError(f"need n >= 1 and 1 <= S < p/2 (got n={n}, p={p}, S={S})")
    return float(n * (p - S))


def corollary_threshold(u: float, w: int, n: int, p: int, S: int, K: float = DEFAULT_K) -> float:
    """Null threshold t with P_I[phi_{A_W}(Sigma_n - I) >= sigma_0 t] <= exp(-u/4)"""
    _check_K(K)
    if u <= 0 or not 1 <= w <= S:
        raise InvalidParameterError(f"need u > 0 and 1 <= w <= S (got u={u}, w={w}, S={S})")
    ratio = w / _denominator(n, p, S)
    return max(math.sqrt(u / (2 * (1 - K))) * math.sqrt(ratio), u / K * ratio)


def alternative_threshold(
    u: float, w: int, s: int, n: int, p: int, S: int, K: float = DEFAULT_K
) -> float:
    """Threshold t~ bounding the deviation of phi_{A_W}(Sigma_n - Sigma) under F(s, S, sigma)"""
    if w == 1:
        _check_K(K)
        if u <= 0:
            raise InvalidParameterError(f"u must be positive, got {u}")
        ratio = (2 * s + 1) / _denominator(n, p, S)
        return max(math.sqrt(u / (1 - K)) * math.sqrt(ratio), u / K * ratio)
    return (2 * s + 1) * corollary_threshold(u, w, n, p, S, K)


@dataclass(frozen=True)
class ThresholdSpec:
    kind: str
    n: int
    p: int
    S: int
    s: Optional[int] = None
    u: Optional[float] = None
    K: float = DEFAULT_K

    def __post_init__(self):
        kind = _canonical(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.u is None:
            object.__setattr__(self, "u", DEFAULT_U[kind])
        _check_K(self.K)
        if kind == "ms+":
            if self.u <= 0:
                raise InvalidParameterError(f"MS+ needs u > 0, got {self.u}")
        elif self.u <= 1:
            raise InvalidParameterError(f"{kind.upper()} needs u > 1, got {self.u}")
        _denominator(self.n, self.p, self.S)
        if kind in ("hs+", "hs", "selector") and self.s is None:
            raise InvalidParameterError(f"{kind.upper()} needs the sparsity s")
        if self.s is not None and not 1 <= self.s <= self.S:
            raise InvalidParameterError(f"sparsity s={self.s} must satisfy 1 <= s <= S={self.S}")
        if kind == "selector" and self.s >= self.S:
            raise InvalidParameterError(f"the selector needs s < S, got s={self.s}, S={self.S}")

    @property
    def D(self) -> float:
        return float(self.n * (self.p - self.S))

    def with_kind(self, kind: str) -> "ThresholdSpec":
        return replace(self, kind=kind, u=None)


def _two_branch(scale: float, D: float) -> float:
    """max(sqrt(4 scale / D), 8 scale / D)"""
    return max(math.sqrt(4 * scale / D), 8 * scale / D)


def theoretical_threshold(spec: ThresholdSpec) -> float:
    u, S, s, D = spec.u, spec.S, spec.s, spec.D
    if spec.kind == "ms+":
        return max(math.sqrt(u * S / D), 2 * u * S / D)
    if spec.kind == "ms":
        if S == 1:
            logger.warning("MS threshold with S=1 has log(S)=0 and degenerates to 0")
        return S * _two_branch(u * math.log(S), D)
    if spec.kind == "hs+":
        return _two_branch(u * s * log_binomial(S, s), D)
    if spec.kind == "hs":
        return s * _two_branch(u * (math.log(s) + log_binomial(S, s)), D)
    return selector_threshold(spec.n, spec.p, S, s, u)


def separation_radius(spec: ThresholdSpec) -> float:
    """Smallest signal level sigma covered by the corresponding risk bound"""
    if spec.s is None:
        raise InvalidParameterError("the separation radius needs the sparsity s")
    t = theoretical_threshold(spec)
    u, S, s, D = spec.u, spec.S, spec.s, spec.D
    if spec.kind == "ms+":
        return 2 * (s + 1) / s * t
    if spec.kind == "ms":
        # (u - 1) here against u in the threshold, as the MS risk bound states it
        return t + _two_branch((u - 1) * (2 * s + 1) * math.log(S), D)
    if spec.kind == "hs+":
        return (t + (2 * s + 1) * max(math.sqrt(u * s / D), 2 * u * s / D)) / s
    if spec.kind == "hs":
        scale = math.log(s * (2 * s + 1)) + log_binomial(S, s)
        return t + _two_branch((u - 1) * scale, D)
    return 2 * t


def selector_threshold(n: int, p: int, S: int, s: int, u: float) -> float:
    """
    tau_n = max{(sqrt(log s) + sqrt(log(S - s))) sqrt(u (2s + 1) / (n (p - S))),
                2 u log(s (S - s)) (2s + 1) / (n (p - S))}
    """
    if u <= 1:
        raise InvalidParameterError(f"the selector needs u > 1, got {u}")
    if not 1 <= s < S:
        raise InvalidParameterError(f"the selector needs 1 <= s < S, got s={s}, S={S}")
    D = _denominator(n, p, S)
    root_logs = math.sqrt(math.log(s)) + math.sqrt(math.log(S - s))
    linear_log = max(0.0, math.log(s * (S - s)))
    tau = max(root_logs * math.sqrt(u * (2 * s + 1) / D), 2 * u * linear_log * (2 * s + 1) / D)
    if tau <= 0:
        logger.warning(f"Selector threshold degenerates to 0 for s={s}, S={S}")
    return tau


def risk_bound(spec: ThresholdSpec, one_sided_selector: bool = False) -> float:
    """Upper bound on type I + type II error (Hamming risk for the selector)"""
    u, S, s = spec.u, spec.S, spec.s
    if spec.kind == "ms+":
        return 2 * math.exp(-u / 4)
    if spec.kind == "ms":
        return 4 * math.exp(-(u - 1) * math.log(S))
    if spec.kind == "hs+":
        return math.exp(-(u - 1) * log_binomial(S, s)) + math.exp(-u / 4)
    if spec.kind == "hs":
        return 4 * math.exp(-(u - 1) * (math.log(s) + log_binomial(S, s)))
    factor = 1.0 if one_sided_selector else 2.0
    return factor * (math.exp(-(u - 1) * math.log(s) / 4) + math.exp(-(u - 1) * math.log(S - s) / 4))
