"""
Toeplitz Covariance Model
=========================

Domain types for Toeplitz covariance specifications, the lag functional
matrices A_W and the sparse alternative classes F(s, S, sigma) / F+(s, S, sigma).
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from scipy import linalg

from src.toeplitz_testing.errors import InvalidParameterError, NotPositiveDefiniteError

logger = logging.getLogger(__name__)

PLACEMENTS = ("random", "near_diagonal", "far")

# Cholesky pivots must exceed PD_TOLERANCE * sigma_0
PD_TOLERANCE = 1e-10


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InvalidParameterError(message)


def _frozen_array(values: Iterable[float]) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class ToeplitzSpec:
    """Diagonal vector (sigma_0, ..., sigma_{p-1}) of a Toeplitz covariance matrix"""

    diagonals: np.ndarray

    def __post_init__(self):
        diagonals = _frozen_array(self.diagonals)
        _require(diagonals.ndim == 1 and diagonals.size >= 1, "diagonals must be a non-empty vector")
        _require(bool(np.all(np.isfinite(diagonals))), "diagonals must be finite")
        _require(diagonals[0] > 0, f"sigma_0 must be positive, got {diagonals[0]}")
        _require(
            bool(np.all(np.abs(diagonals) <= diagonals[0] * (1 + 1e-12))),
            "every |sigma_k| must be at most sigma_0",
        )
        object.__setattr__(self, "diagonals", diagonals)

    @property
    def p(self) -> int:
        return int(self.diagonals.size)

    @property
    def sigma0(self) -> float:
        return float(self.diagonals[0])

    @classmethod
    def identity(cls, p: int) -> "ToeplitzSpec":
        _require(p >= 1, f"p must be at least 1, got {p}")
        diagonals = np.zeros(p)
        diagonals[0] = 1.0
        return cls(diagonals)

    @classmethod
    def from_lags(cls, p: int, lags: Dict[int, float], sigma0: float = 1.0) -> "ToeplitzSpec":
        """Build a spec from a sparse {lag: value} map"""
        _require(p >= 1, f"p must be at least 1, got {p}")
        diagonals = np.zeros(p)
        diagonals[0] = sigma0
        for lag, value in lags.items():
            _require(1 <= lag <= p - 1, f"lag {lag} outside 1..{p - 1}")
            diagonals[lag] = value
        return cls(diagonals)

    def support(self, S: Optional[int] = None) -> Tuple[int, ...]:
        """Nonzero lags among 1..S (1..p-1 by default)"""
        upper = self.p - 1 if S is None else S
        return tuple(int(j) for j in np.flatnonzero(self.diagonals[1 : upper + 1]) + 1)

    def normalized(self) -> "ToeplitzSpec":
        """Correlation form with sigma_0 = 1"""
        return ToeplitzSpec(self.diagonals / self.sigma0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ToeplitzSpec):
            return NotImplemented
        return np.array_equal(self.diagonals, other.diagonals)

    def __hash__(self) -> int:
        return hash(self.diagonals.tobytes())


def densify(spec: ToeplitzSpec) -> np.ndarray:
    """Dense symmetric p x p matrix with M[i, j] = sigma_{|i-j|}"""
    return linalg.toeplitz(spec.diagonals)


@lru_cache(maxsize=16)
def _cholesky_cached(key: bytes, p: int) -> Optional[np.ndarray]:
    diagonals = np.frombuffer(key, dtype=float)
    try:
        factor = linalg.cholesky(linalg.toeplitz(diagonals), lower=True)
    except linalg.LinAlgError:
        return None
    if np.any(np.diag(factor) ** 2 <= PD_TOLERANCE * diagonals[0]):
        return None
    factor.flags.writeable = False
    return factor


def cholesky_factor(spec: ToeplitzSpec) -> np.ndarray:
    """Lower Cholesky factor of densify(spec), cached per diagonal vector"""
    factor = _cholesky_cached(spec.diagonals.tobytes(), spec.p)
    if factor is None:
        raise NotPositiveDefiniteError(
            f"Toeplitz matrix with p={spec.p} and diagonals starting "
            f"{np.round(spec.diagonals[:5], 6).tolist()} is not positive definite"
        )
    return factor


def is_positive_definite(spec: ToeplitzSpec) -> bool:
    return _cholesky_cached(spec.diagonals.tobytes(), spec.p) is not None


@dataclass(frozen=True)
class FunctionalMatrix:
    """
    Implicit A_W = sum_{j in W} A_j with [A_j]_{kl} = 1/(2(p-j)) 1(|k-l| = j).

    Only the lag set is stored; dense() exists for oracles and small checks.
    """

    p: int
    lags: Tuple[int, ...]

    def __post_init__(self):
        lags = tuple(sorted(set(int(j) for j in self.lags)))
        _require(len(lags) >= 1, "W must contain at least one lag")
        _require(all(1 <= j <= self.p - 1 for j in lags), f"lags must lie in 1..{self.p - 1}")
        object.__setattr__(self, "lags", lags)

    @property
    def w(self) -> int:
        return len(self.lags)

    def weight(self, j: int) -> float:
        return 1.0 / (2 * (self.p - j))

    def nonzero_count(self) -> int:
        return sum(2 * (self.p - j) for j in self.lags)

    def frobenius2(self) -> float:
        return sum(1.0 / (2 * (self.p - j)) for j in self.lags)

    def trace_with(self, matrix: np.ndarray) -> float:
        """Tr(A_W M) read off the j-th upper and lower diagonals of M"""
        return float(
            sum(
                (np.trace(matrix, offset=j) + np.trace(matrix, offset=-j)) * self.weight(j)
                for j in self.lags
            )
        )

    def dense(self) -> np.ndarray:
        matrix = np.zeros((self.p, self.p))
        for j in self.lags:
            band = np.full(self.p - j, self.weight(j))
            matrix += np.diag(band, j) + np.diag(band, -j)
        return matrix


@dataclass(frozen=True)
class SparseAlternative:
    """A member of F(s, S, sigma), or of F+(s, S, sigma) when every sign is +1"""

    p: int
    s: int
    S: int
    sigma: float
    support: Tuple[int, ...]
    signs: Tuple[int, ...]
    spec: ToeplitzSpec = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        validate_sparsity(self.p, self.s, self.S)
        _require(self.sigma > 0, f"sigma must be positive, got {self.sigma}")
        _require(len(set(self.support)) == self.s, f"support must hold exactly s={self.s} lags")
        _require(all(1 <= j <= self.S for j in self.support), f"support must lie in 1..{self.S}")
        _require(len(self.signs) == self.s, "one sign per support lag is required")
        _require(all(sign in (-1, 1) for sign in self.signs), "signs must be +1 or -1")
        lags = {j: sign * self.sigma for j, sign in zip(self.support, self.signs)}
        object.__setattr__(self, "spec", ToeplitzSpec.from_lags(self.p, lags))

    @property
    def one_sided(self) -> bool:
        return all(sign == 1 for sign in self.signs)

    def eta(self) -> np.ndarray:
        """True support indicator over lags 1..S"""
        indicator = np.zeros(self.S, dtype=int)
        indicator[np.asarray(self.support) - 1] = 1
        return indicator

    def separation(self, absolute: bool) -> float:
        """sum_j sigma_j (one-sided) or sum_j |sigma_j| (two-sided) over 1..S"""
        if absolute:
            return self.s * self.sigma
        return self.sigma * sum(self.signs)


def validate_sparsity(p: int, s: int, S: int) -> None:
    _require(p >= 3, f"p must be at least 3 to hold a lag horizon, got {p}")
    _require(1 <= S and 2 * S < p, f"horizon S={S} must satisfy 1 <= S < p/2 (p={p})")
    _require(1 <= s <= S, f"sparsity s={s} must satisfy 1 <= s <= S={S}")


def pd_safe_sigma(s: int) -> float:
    """Signal level below which every member of F(s, S, sigma) is diagonally dominant"""
    _require(s >= 1, f"s must be at least 1, got {s}")
    return 0.95 / (2 * s)


def draw_support(
    s: int, S: int, placement: str, rng: Optional[np.random.Generator]
) -> Tuple[int, ...]:
    _require(placement in PLACEMENTS, f"unknown placement '{placement}', expected one of {PLACEMENTS}")
    if placement == "near_diagonal":
        return tuple(range(1, s + 1))
    if placement == "far":
        return tuple(range(S - s + 1, S + 1))
    _require(rng is not None, "random placement needs a random generator")
    return tuple(sorted(int(j) for j in rng.choice(np.arange(1, S + 1), size=s, replace=False)))


def make_sparse_alternative(
    p: int,
    s: int,
    S: int,
    sigma: float,
    placement: str = "random",
    two_sided: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> SparseAlternative:
    """Draw a worst-case class member with every nonzero lag set to exactly +/- sigma"""
    validate_sparsity(p, s, S)
    _require(sigma > 0, f"sigma must be positive, got {sigma}")
    support = draw_support(s, S, placement, rng)
    if two_sided:
        _require(rng is not None, "two-sided signs need a random generator")
        signs = tuple(int(sign) for sign in rng.choice(np.array([-1, 1]), size=s))
    else:
        signs = (1,) * s
    alternative = SparseAlternative(p=p, s=s, S=S, sigma=sigma, support=support, signs=signs)
    if not is_positive_definite(alternative.spec):
        raise NotPositiveDefiniteError(
            f"alternative with p={p}, s={s}, S={S}, sigma={sigma}, support={support} "
            f"is not positive definite"
        )
    return alternative


TEST_KINDS = ("ms+", "ms", "hs+", "hs")

_KIND_ALIASES = {
    "ms+": "ms+",
    "msplus": "ms+",
    "ms_plus": "ms+",
    "ms": "ms",
    "hs+": "hs+",
    "hsplus": "hs+",
    "hs_plus": "hs+",
    "hs": "hs",
}


def normalize_kind(kind: str) -> str:
    """Canonical lower-case test name ('ms+', 'ms', 'hs+' or 'hs')"""
    key = str(kind).strip().lower().replace("-", "_")
    if key not in _KIND_ALIASES:
        raise InvalidParameterError(f"unknown test kind '{kind}', expected one of {TEST_KINDS}")
    return _KIND_ALIASES[key]


def is_one_sided(kind: str) -> bool:
    return normalize_kind(kind).endswith("+")


def is_scan(kind: str) -> bool:
    return normalize_kind(kind).startswith("hs")
