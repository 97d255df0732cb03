"""
Toeplitz GOF Configuration
==========================

Environment settings, logging setup and the ExperimentConfig document that
drives every harness scenario.
"""

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from src.toeplitz_testing.errors import ConfigError, InvalidParameterError
from src.toeplitz_testing.model import PLACEMENTS, TEST_KINDS, normalize_kind
from src.toeplitz_testing.procedures import AGGREGATE_MODES, THRESHOLD_SOURCES

# Load environment variables
load_dotenv()

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

SCENARIOS = (
    "power_curve",
    "type1",
    "selection_risk",
    "ma_power",
    "verify_concentration",
    "ms_vs_hs",
    "risk_check",
)
S_RULES = ("half", "minus_one")

BUILTIN_SEED = 20240101


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"environment variable {name} must be an integer, got '{value}'")


def default_seed() -> int:
    return _env_int("TOEPLITZ_GOF_SEED", BUILTIN_SEED)


def default_workers() -> int:
    return _env_int("TOEPLITZ_GOF_WORKERS", 1)


def configure_logging(level: Optional[str] = None) -> logging.Logger:
    """File + stderr logging in the service's format; stdout stays free for CSV"""
    level_name = (level or os.getenv("LOG_LEVEL", "INFO")).strip().upper()
    if not isinstance(logging.getLevelName(level_name), int):
        raise ConfigError(f"unknown log level '{level_name}', expected DEBUG, INFO, WARNING, ERROR or CRITICAL")
    log_dir = os.getenv("TOEPLITZ_GOF_LOG_DIR", os.path.join(PROJECT_ROOT, "logs"))
    os.makedirs(log_dir, exist_ok=True)
    log_file = os.path.join(log_dir, "toeplitz_gof.log")
    logging.basicConfig(
        level=level_name,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.FileHandler(log_file), logging.StreamHandler()],
    )
    return logging.getLogger("src")


def default_horizon(p: int) -> int:
    """S = floor(sqrt(p)), kept strictly below p/2"""
    return max(1, min(int(math.isqrt(p)), math.ceil(p / 2) - 1))


def default_sparsity(S: int, rule: str = "half") -> int:
    """s = (S - 1)/2 ('half') or S - 1 ('minus_one'), at least 1"""
    if rule not in S_RULES:
        raise ConfigError(f"sparsity rule must be one of {S_RULES}, got '{rule}'")
    return max(1, (S - 1) // 2 if rule == "half" else S - 1)


def _check_grid(name: str, values: Optional[List[Any]]) -> None:
    if values is None:
        return
    if len(values) == 0:
        raise ConfigError(f"{name} must not be empty")
    if list(values) != sorted(values):
        raise ConfigError(f"{name} must be sorted ascending, got {values}")


@dataclass
class ExperimentConfig:
    scenario: str
    n: int = 100
    p: int = 100
    S: Optional[int] = None
    s: Optional[int] = None
    s_rule: str = "half"
    alpha: float = 0.1
    R: int = 5000
    calibration_R: Optional[int] = None
    sigma_grid: Optional[List[float]] = None
    phi_grid: Optional[List[float]] = None
    n_values: Optional[List[int]] = None
    p_values: Optional[List[int]] = None
    s_values: Optional[List[int]] = None
    s_grid: List[int] = field(default_factory=lambda: [2, 10])
    aggregate_mode: str = "bonferroni"
    placement: str = "random"
    kinds: List[str] = field(default_factory=lambda: list(TEST_KINDS))
    threshold_source: str = "calibrated"
    u: Optional[float] = None
    K: float = 0.5
    sigma_factor: float = 2.0
    one_sided: bool = False
    u_grid: List[float] = field(default_factory=lambda: [2.0, 4.0, 8.0])
    w: Optional[int] = None
    two_sided: bool = False
    grid_points: int = 12
    master_seed: int = field(default_factory=default_seed)
    workers: int = field(default_factory=default_workers)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario '{self.scenario}', expected one of {SCENARIOS}")
        if self.n < 1:
            raise ConfigError(f"n must be at least 1, got {self.n}")
        if self.p < 3:
            raise ConfigError(f"p must be at least 3, got {self.p}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.R < 1 or (self.calibration_R is not None and self.calibration_R < 1):
            raise ConfigError("replication counts must be at least 1")
        if self.S is not None and (self.S < 1 or 2 * self.S >= self.p):
            raise ConfigError(f"S={self.S} must satisfy 1 <= S < p/2 (p={self.p})")
        if self.s is not None and self.s < 1:
            raise ConfigError(f"s must be at least 1, got {self.s}")
        if self.s is not None and self.S is not None and self.s > self.S:
            raise ConfigError(f"s={self.s} must not exceed S={self.S}")
        if self.s_rule not in S_RULES:
            raise ConfigError(f"s_rule must be one of {S_RULES}, got '{self.s_rule}'")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"placement must be one of {PLACEMENTS}, got '{self.placement}'")
        if self.threshold_source not in THRESHOLD_SOURCES:
            raise ConfigError(f"threshold_source must be one of {THRESHOLD_SOURCES}")
        if self.aggregate_mode not in AGGREGATE_MODES:
            raise ConfigError(f"aggregate_mode must be one of {AGGREGATE_MODES}")
        if not self.kinds:
            raise ConfigError("kinds must list at least one test")
        try:
            self.kinds = [normalize_kind(kind) for kind in self.kinds]
        except InvalidParameterError as e:
            raise ConfigError(str(e))
        if not 0 < self.K < 1:
            raise ConfigError(f"K must lie in (0, 1), got {self.K}")
        if self.sigma_factor <= 0 or self.grid_points < 2:
            raise ConfigError("sigma_factor must be positive and grid_points at least 2")
        if self.workers == 0:
            raise ConfigError("workers must be a positive count or negative for all-but-k CPUs")
        if self.master_seed < 0:
            raise ConfigError(f"master_seed must be non-negative, got {self.master_seed}")
        for name in ("sigma_grid", "phi_grid", "n_values", "p_values", "s_values", "s_grid", "u_grid"):
            _check_grid(name, getattr(self, name))
        if self.sigma_grid is not None and self.sigma_grid[0] < 0:
            raise ConfigError("sigma_grid values must be non-negative")
        if self.phi_grid is not None and not all(abs(phi) < 1 for phi in self.phi_grid):
            raise ConfigError("phi_grid values must satisfy |phi| < 1")
        if self.p_values is not None and self.p_values[0] < 3:
            raise ConfigError("p_values must all be at least 3")

    def horizon(self, p: Optional[int] = None) -> int:
        """Configured S when it fits p, otherwise the default horizon for p"""
        p = self.p if p is None else p
        if self.S is not None and 2 * self.S < p:
            return self.S
        return default_horizon(p)

    def sparsity(self, S: int) -> int:
        if self.s is not None and self.s <= S:
            return self.s
        return default_sparsity(S, self.s_rule)

    @property
    def null_R(self) -> int:
        return self.calibration_R or self.R

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(document, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(document) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        if "scenario" not in document:
            raise ConfigError("configuration needs a 'scenario'")
        try:
            return cls(**document)
        except TypeError as e:
            raise ConfigError(f"invalid configuration: {e}")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"configuration is not valid JSON: {e}")
        return cls.from_dict(document)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                return cls.from_json(f.read())
        except OSError as e:
            raise ConfigError(f"cannot read configuration file {path}: {e}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Apply flag values over file values; None means 'not given'"""
        changes = {key: value for key, value in overrides.items() if value is not None}
        unknown = sorted(set(changes) - {f.name for f in fields(self)})
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        return replace(self, **changes)
