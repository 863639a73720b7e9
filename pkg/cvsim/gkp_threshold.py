"""
Squeezing units, the GKP nearest-bin error model and its threshold tables.

Nothing in here takes kappa or delta: logical error rates are a function of
the squeezed variance epsilon alone.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from django.core.exceptions import ValidationError
from scipy import optimize, special

logger = logging.getLogger(__name__)

# Square-lattice GKP: decoding bins have half-width sqrt(pi)/2.
BIN_HALF_WIDTH = float(np.sqrt(np.pi) / 2.0)

DEFAULT_ANCHOR_DB = 20.5
DEFAULT_ANCHOR_P = 1e-6
DISCUSSION_LEVELS_DB = (15.6, 17.4, 20.5)
OUTSIDE_REGIME_NOTE = "outside calibrated regime, cf. alternative constructions"

MULTIPLIER_BRACKET = (1.0, 1e4)
SQUEEZING_BRACKET_DB = (0.0, 60.0)


@dataclass(frozen=True)
class SqueezingLevel:
    """A variance in decibels relative to vacuum; negative means squeezed."""

    decibels: float

    @classmethod
    def of_squeezing(cls, magnitude: float) -> "SqueezingLevel":
        """From a positive 'dB of squeezing' figure, e.g. 20.5."""
        return cls(-float(magnitude))

    @classmethod
    def from_variance(cls, variance: float) -> "SqueezingLevel":
        return cls(variance_to_db(variance))

    @property
    def squeezing_magnitude(self) -> float:
        return -self.decibels

    @property
    def variance(self) -> float:
        return db_to_variance(self.decibels)


def db_to_variance(level: Union[float, SqueezingLevel]) -> float:
    decibels = level.decibels if isinstance(level, SqueezingLevel) else float(level)
    return 0.5 * 10.0 ** (decibels / 10.0)


def variance_to_db(variance: float) -> float:
    if not variance > 0:
        raise ValidationError(f"Variance must be > 0 (got {variance}).")
    return float(10.0 * np.log10(2.0 * variance))


def log_misbin_probability(variance: float) -> float:
    """log P(|x| > sqrt(pi)/2) for x ~ N(0, variance)."""
    if not variance > 0:
        raise ValidationError(f"Noise variance must be > 0 (got {variance}).")
    return float(np.log(2.0) + special.log_ndtr(-BIN_HALF_WIDTH / np.sqrt(variance)))


def misbin_probability(variance: float) -> float:
    """Probability that Gaussian noise of this variance leaves the correct GKP bin."""
    return float(np.exp(log_misbin_probability(variance)))


@dataclass(frozen=True)
class ErrorModel:
    """Accumulated noise per measured GKP quadrature is multiplier * epsilon."""

    multiplier: float
    anchor_db: Optional[float] = None
    anchor_p: Optional[float] = None

    def __post_init__(self):
        if not self.multiplier > 0:
            raise ValidationError("Error model multiplier must be > 0.")

    def total_variance(self, epsilon: float) -> float:
        return self.multiplier * epsilon

    def log_error_rate(self, squeezing_db: float) -> float:
        epsilon = db_to_variance(SqueezingLevel.of_squeezing(squeezing_db))
        return log_misbin_probability(self.total_variance(epsilon))

    def error_rate(self, squeezing_db: float) -> float:
        return float(np.exp(self.log_error_rate(squeezing_db)))


@dataclass(frozen=True)
class ThresholdRow:
    db: float
    epsilon: float
    sigma2_total: float
    p_err: float
    note: str = ""


@dataclass
class NoiseBudget:
    """Variance added to each (mode, quadrature) by a sequence of averaged steps."""

    q_variance: np.ndarray = field(default_factory=lambda: np.zeros(0))
    p_variance: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.q_variance = np.asarray(self.q_variance, dtype=float).reshape(-1)
        self.p_variance = np.asarray(self.p_variance, dtype=float).reshape(-1)
        if self.q_variance.shape != self.p_variance.shape:
            raise ValidationError("Budget needs one q and one p entry per mode.")
        if np.any(self.q_variance < 0) or np.any(self.p_variance < 0):
            raise ValidationError("Budget variances must be >= 0.")

    @property
    def n_modes(self) -> int:
        return self.q_variance.size

    def total(self, mode: int) -> float:
        return float(self.q_variance[mode] + self.p_variance[mode])

    def as_matrix(self) -> np.ndarray:
        """(n_modes, 2) array of (q, p) variances."""
        return np.stack([self.q_variance, self.p_variance], axis=1)

    def __add__(self, other: "NoiseBudget") -> "NoiseBudget":
        n = max(self.n_modes, other.n_modes)

        def pad(v):
            return np.pad(v, (0, n - v.size))

        return NoiseBudget(
            pad(self.q_variance) + pad(other.q_variance),
            pad(self.p_variance) + pad(other.p_variance),
        )


def budget_error_rates(budget: NoiseBudget) -> np.ndarray:
    """Misbin probability for every (mode, quadrature) of the budget; zero noise gives 0."""
    variances = budget.as_matrix()
    rates = np.zeros_like(variances)
    positive = variances > 0
    rates[positive] = [misbin_probability(v) for v in variances[positive]]
    return rates


def calibrate_multiplier(anchor_db: float, anchor_p: float) -> ErrorModel:
    """
    Solve misbin_probability(k * epsilon(anchor_db)) = anchor_p for k.

    Bisection runs on the log error rate so that anchors down to 1e-300 and
    below stay representable.
    """
    if not 0.0 < anchor_p < 0.5:
        raise ValidationError(f"Anchor error rate must lie in (0, 1/2), got {anchor_p}.")
    epsilon = db_to_variance(SqueezingLevel.of_squeezing(anchor_db))
    target = float(np.log(anchor_p))

    def residual(k):
        return log_misbin_probability(k * epsilon) - target

    lo, hi = MULTIPLIER_BRACKET
    f_lo = residual(lo)
    if abs(f_lo) <= 1e-12 * max(1.0, abs(target)):
        return ErrorModel(multiplier=1.0, anchor_db=anchor_db, anchor_p=anchor_p)
    if f_lo > 0 or residual(hi) < 0:
        raise ValidationError(
            f"No multiplier in [{lo:g}, {hi:g}] maps {anchor_db} dB to error rate {anchor_p:g}."
        )
    k = optimize.bisect(residual, lo, hi, xtol=1e-12, rtol=1e-12, maxiter=500)
    logger.info(f"Calibrated multiplier k={k:.6g} on anchor ({anchor_db} dB, {anchor_p:g})")
    return ErrorModel(multiplier=float(k), anchor_db=anchor_db, anchor_p=anchor_p)


def default_model() -> ErrorModel:
    return calibrate_multiplier(DEFAULT_ANCHOR_DB, DEFAULT_ANCHOR_P)


def threshold_table(model: ErrorModel, levels: Iterable[float]) -> List[ThresholdRow]:
    """One row per squeezing magnitude (dB), sorted ascending."""
    lowest_calibrated = min(DISCUSSION_LEVELS_DB)
    rows = []
    for db in sorted({float(x) for x in levels}):
        epsilon = db_to_variance(SqueezingLevel.of_squeezing(db))
        sigma2 = model.total_variance(epsilon)
        rows.append(
            ThresholdRow(
                db=db,
                epsilon=epsilon,
                sigma2_total=sigma2,
                p_err=misbin_probability(sigma2),
                note=OUTSIDE_REGIME_NOTE if db < lowest_calibrated else "",
            )
        )
    return rows


def required_squeezing(model: ErrorModel, p_target: float) -> float:
    """Smallest squeezing magnitude (dB) whose error rate is p_target."""
    if not 0.0 < p_target < 0.5:
        raise ValidationError(f"Target error rate must lie in (0, 1/2), got {p_target}.")
    target = float(np.log(p_target))

    def residual(db):
        return model.log_error_rate(db) - target

    lo, hi = SQUEEZING_BRACKET_DB
    if residual(lo) < 0 or residual(hi) > 0:
        raise ValidationError(
            f"Error rate {p_target:g} is not reachable between {lo:g} and {hi:g} dB."
        )
    return float(optimize.bisect(residual, lo, hi, xtol=1e-12, rtol=1e-14, maxiter=500))


def table_levels(extra: Optional[Sequence[float]] = None) -> List[float]:
    return sorted(set(DISCUSSION_LEVELS_DB) | {float(x) for x in (extra or [])})
