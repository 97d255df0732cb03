"""
Gaussian Samplers
=================

Reproducible N_p(0, Sigma) draws for Toeplitz covariances and the sparse
MA(floor(p/4)) example process with its closed-form autocovariance.
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from src.toeplitz_testing.errors import InvalidParameterError
from src.toeplitz_testing.estimator import SampleSet
from src.toeplitz_testing.model import ToeplitzSpec, cholesky_factor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RngStream:
    """
    Counter-addressed random stream.

    The pair (master_seed, stream_id), under an optional namespace of integers,
    seeds a PCG64 generator through numpy's SeedSequence, which yields the same
    draws on every platform.
    """

    master_seed: int
    stream_id: int = 0
    namespace: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.master_seed < 0 or self.stream_id < 0 or any(key < 0 for key in self.namespace):
            raise InvalidParameterError("seeds and stream identifiers must be non-negative integers")

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(
            entropy=int(self.master_seed),
            spawn_key=tuple(int(key) for key in self.namespace) + (int(self.stream_id),),
        )
        return np.random.Generator(np.random.PCG64(sequence))

    def spawn(self, replication: int) -> "RngStream":
        """Stream of one replication nested under this stream"""
        return RngStream(self.master_seed, replication, self.namespace + (self.stream_id,))


RandomSource = Union[RngStream, np.random.Generator]


def as_generator(rng: RandomSource) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise InvalidParameterError(f"expected an RngStream or numpy Generator, got {type(rng).__name__}")


def sample_null(n: int, p: int, rng: RandomSource) -> SampleSet:
    """n draws from N_p(0, I_p)"""
    if n < 1 or p < 1:
        raise InvalidParameterError(f"n and p must be at least 1, got n={n}, p={p}")
    return SampleSet(as_generator(rng).standard_normal((n, p)))


def sample_gaussian(spec: ToeplitzSpec, n: int, rng: RandomSource) -> SampleSet:
    """n draws X = L Z from N_p(0, Sigma) with L the cached Cholesky factor of Sigma"""
    if n < 1:
        raise InvalidParameterError(f"n must be at least 1, got {n}")
    factor = cholesky_factor(spec)
    noise = as_generator(rng).standard_normal((n, spec.p))
    return SampleSet(noise @ factor.T)


@dataclass(frozen=True)
class MaSpec:
    """X_t = sum_{i=0}^{q} phi^i eps_{t-2i} with q = floor(p/4)"""

    phi: float
    p: int

    def __post_init__(self):
        if not abs(self.phi) < 1:
            raise InvalidParameterError(f"MA coefficient must satisfy |phi| < 1, got {self.phi}")
        if self.p < 1:
            raise InvalidParameterError(f"p must be at least 1, got {self.p}")

    @property
    def q(self) -> int:
        return self.p // 4


def ma_coefficients(spec: MaSpec) -> np.ndarray:
    """Filter of length 2q + 1 with phi^i at position 2i and zeros at odd positions"""
    coefficients = np.zeros(2 * spec.q + 1)
    coefficients[::2] = spec.phi ** np.arange(spec.q + 1)
    return coefficients


def ma_autocovariance(spec: MaSpec, h: int) -> float:
    """Cov(X_{t+h}, X_t) = phi^{h/2} (1 - phi^{2(q - h/2 + 1)}) / (1 - phi^2) for even h <= 2q"""
    if h < 0:
        raise InvalidParameterError(f"lag must be non-negative, got {h}")
    if h % 2 == 1 or h // 2 > spec.q:
        return 0.0
    half = h // 2
    phi2 = spec.phi ** 2
    return spec.phi ** half * (1 - phi2 ** (spec.q - half + 1)) / (1 - phi2)


def ma_covariance_spec(spec: MaSpec) -> ToeplitzSpec:
    """Correlation-form Toeplitz spec of the MA example (sigma_0 = 1)"""
    diagonals = np.array([ma_autocovariance(spec, h) for h in range(spec.p)])
    return ToeplitzSpec(diagonals / diagonals[0])


def ma_signal_level(spec: MaSpec) -> float:
    """Smallest nonzero |sigma_h| / sigma_0, the level sigma of the class the example belongs to"""
    diagonals = np.abs(ma_covariance_spec(spec).diagonals[1:])
    nonzero = diagonals[diagonals > 0]
    return float(nonzero.min()) if nonzero.size else 0.0


def sample_ma_process(spec: MaSpec, n: int, rng: RandomSource, normalized: bool = True) -> SampleSet:
    """
    n independent length-p windows of the MA process, each from fresh white noise
    of length p + 2q. With normalized=True the windows are divided by the process
    standard deviation so their covariance is ma_covariance_spec(spec).
    """
    if n < 1:
        raise InvalidParameterError(f"n must be at least 1, got {n}")
    q, p = spec.q, spec.p
    noise = as_generator(rng).standard_normal((n, p + 2 * q))
    windows = np.zeros((n, p))
    for i, weight in enumerate(spec.phi ** np.arange(q + 1)):
        start = 2 * q - 2 * i
        windows += weight * noise[:, start : start + p]
    if normalized:
        windows /= np.sqrt(ma_autocovariance(spec, 0))
    return SampleSet(windows)
