"""
Gaussian states and the primitive operations every channel is composed from.

Quadratures are ordered (q_1..q_n, p_1..p_n) with hbar = 1, so the vacuum
has variance 1/2 in both quadratures.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from django.core.exceptions import ValidationError
from scipy import stats

from .models import Quadrature, TransformKind

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
PHYSICALITY_TOL = 1e-9
SYMPLECTIC_TOL = 1e-12
# Measured marginals at or below this variance are treated as sharp.
VARIANCE_FLOOR = 1e-14

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def symplectic_form(n_modes: int) -> np.ndarray:
    """Canonical form [[0, I], [-I, 0]] for the (q.., p..) ordering."""
    eye = np.eye(n_modes)
    zero = np.zeros((n_modes, n_modes))
    return np.block([[zero, eye], [-eye, zero]])


def _scale(matrix: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(matrix))) if matrix.size else 1.0)


@dataclass(frozen=True, eq=False)
class GaussianState:
    """Mean vector and covariance matrix of an n-mode Gaussian state."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if mean.size == 0 or mean.size % 2:
            raise ValidationError("Mean vector must have even, nonzero length 2n.")
        if cov.shape != (mean.size, mean.size):
            raise ValidationError(
                f"Covariance shape {cov.shape} does not match mean length {mean.size}."
            )
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * _scale(cov):
            raise ValidationError("Covariance matrix must be symmetric.")
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2

    def q_index(self, mode: int) -> int:
        return mode

    def p_index(self, mode: int) -> int:
        return mode + self.n_modes

    def mode_block(self, mode: int) -> np.ndarray:
        """2x2 (q, p) covariance block of one mode."""
        idx = [self.q_index(mode), self.p_index(mode)]
        return self.cov[np.ix_(idx, idx)]

    def is_physical(self, tol: float = PHYSICALITY_TOL) -> bool:
        return is_physical(self, tol)

    def require_physical(self, tol: float = PHYSICALITY_TOL) -> "GaussianState":
        if not is_physical(self, tol):
            raise ValidationError(
                f"State violates the uncertainty principle (min symplectic eigenvalue "
                f"{symplectic_eigenvalues(self).min():.3e} < 1/2)."
            )
        return self

    def pdf(self, points: np.ndarray) -> np.ndarray:
        """Wigner function of the state evaluated at phase-space points (..., 2n)."""
        return stats.multivariate_normal(self.mean, self.cov, allow_singular=True).pdf(points)

    def allclose(self, other: "GaussianState", atol: float = 1e-12) -> bool:
        return (
            self.n_modes == other.n_modes
            and np.allclose(self.mean, other.mean, rtol=0.0, atol=atol)
            and np.allclose(self.cov, other.cov, rtol=0.0, atol=atol)
        )

    def distance(self, other: "GaussianState") -> Tuple[float, float]:
        """Max-abs deviation in (cov, mean)."""
        if self.n_modes != other.n_modes:
            raise ValidationError("Cannot compare states with different mode counts.")
        return (
            float(np.max(np.abs(self.cov - other.cov))),
            float(np.max(np.abs(self.mean - other.mean))),
        )

    def __repr__(self):
        return f"GaussianState(n_modes={self.n_modes})"


@dataclass(frozen=True)
class SqueezedThermalSpec:
    """
    Squeezing factor s >= 1 and excess anti-squeezing delta >= 0.

    The state is G_kappa(q) G_epsilon(p): momentum squeezed, position
    anti-squeezed.
    """

    s: float
    delta: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.s) or self.s < 1.0:
            raise ValidationError(
                f"Squeezing factor s must be >= 1 (got {self.s}); "
                "anti-squeezing is reserved for q."
            )
        if not np.isfinite(self.delta) or self.delta < 0.0:
            raise ValidationError(f"Excess anti-squeezing delta must be >= 0 (got {self.delta}).")

    @classmethod
    def from_db(cls, squeezing_db: float, delta: float = 0.0) -> "SqueezedThermalSpec":
        """Build from a positive 'dB of squeezing' magnitude (5 dB -> s ~ 1.78)."""
        if squeezing_db < 0:
            raise ValidationError("Squeezing magnitude in dB must be >= 0.")
        return cls(s=float(10.0 ** (squeezing_db / 20.0)), delta=delta)

    @property
    def epsilon(self) -> float:
        return 0.5 / self.s**2

    @property
    def kappa(self) -> float:
        return 0.5 * (self.s**2 + self.delta**2)

    @property
    def r(self) -> float:
        return 0.5 * float(np.log(self.s))

    @property
    def excess_variance(self) -> float:
        return 0.5 * self.delta**2

    @property
    def purity(self) -> float:
        return 1.0 / (2.0 * np.sqrt(self.epsilon * self.kappa))

    @property
    def is_pure(self) -> bool:
        return self.delta == 0.0

    @property
    def squeezing_db(self) -> float:
        return float(20.0 * np.log10(self.s))


@dataclass(frozen=True, eq=False)
class SymplecticTransform:
    """Heisenberg action x -> S x + c of a Gaussian unitary."""

    matrix: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        shift = np.array(self.shift, dtype=float).reshape(-1)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] % 2:
            raise ValidationError("Symplectic matrix must be square with even dimension.")
        if shift.size != matrix.shape[0]:
            raise ValidationError("Shift length must match the matrix dimension.")
        matrix.setflags(write=False)
        shift.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "shift", shift)

    @classmethod
    def identity(cls, n_modes: int) -> "SymplecticTransform":
        return cls(np.eye(2 * n_modes), np.zeros(2 * n_modes))

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0] // 2

    def symplectic_defect(self) -> float:
        omega = symplectic_form(self.n_modes)
        return float(np.max(np.abs(self.matrix.T @ omega @ self.matrix - omega)))

    def is_symplectic(self, tol: float = SYMPLECTIC_TOL) -> bool:
        return self.symplectic_defect() <= tol * _scale(self.matrix) ** 2

    def inverse(self) -> "SymplecticTransform":
        # S^-1 = -Omega S^T Omega for symplectic S
        omega = symplectic_form(self.n_modes)
        inv = -omega @ self.matrix.T @ omega
        return SymplecticTransform(inv, -inv @ self.shift)

    def compose(self, first: "SymplecticTransform") -> "SymplecticTransform":
        """Transform that applies `first` and then `self`."""
        if first.n_modes != self.n_modes:
            raise ValidationError("Cannot compose transforms on different mode counts.")
        return SymplecticTransform(
            self.matrix @ first.matrix, self.matrix @ first.shift + self.shift
        )

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return points @ self.matrix.T + self.shift


@dataclass(frozen=True)
class MeasurementOutcome:
    """A recorded measurement: which quadrature was read, what came out, how likely."""

    mode: int
    basis: str
    value: Union[float, Tuple[float, float]]
    density: float
    shear: float = 0.0

    def __post_init__(self):
        if not self.density >= 0.0:
            raise ValidationError("Outcome density must be nonnegative.")

    @property
    def label(self) -> str:
        if self.basis == Quadrature.Q:
            return "q"
        if self.basis == Quadrature.HETERODYNE:
            return "heterodyne"
        return "p" if self.shear == 0 else f"p+{self.shear:g}q"


def _check_mode(n_modes: int, mode: int) -> int:
    if not isinstance(mode, (int, np.integer)) or mode < 0 or mode >= n_modes:
        raise ValidationError(f"Mode index {mode} out of range for {n_modes} modes.")
    return int(mode)


def vacuum_state(n: int) -> GaussianState:
    if n < 1:
        raise ValidationError("A state needs at least one mode.")
    return GaussianState(np.zeros(2 * n), 0.5 * np.eye(2 * n))


def squeezed_thermal_state(spec: SqueezedThermalSpec) -> GaussianState:
    return GaussianState(np.zeros(2), np.diag([spec.kappa, spec.epsilon]))


def tensor_product(*states: GaussianState) -> GaussianState:
    """Join independent states; modes keep their order across the arguments."""
    if not states:
        raise ValidationError("tensor_product needs at least one state.")
    n_total = sum(st.n_modes for st in states)
    mean = np.zeros(2 * n_total)
    cov = np.zeros((2 * n_total, 2 * n_total))
    offset = 0
    for st in states:
        n = st.n_modes
        idx = np.r_[offset:offset + n, n_total + offset:n_total + offset + n]
        mean[idx] = st.mean
        cov[np.ix_(idx, idx)] = st.cov
        offset += n
    return GaussianState(mean, cov)


def _mode_indices(n_modes: int, modes: Sequence[int]) -> np.ndarray:
    modes = np.asarray(modes, dtype=int)
    return np.concatenate([modes, modes + n_modes])


def permute_modes(state: GaussianState, order: Sequence[int]) -> GaussianState:
    """New mode i is old mode order[i]."""
    order = list(order)
    if sorted(order) != list(range(state.n_modes)):
        raise ValidationError(f"{order} is not a permutation of {state.n_modes} modes.")
    idx = _mode_indices(state.n_modes, order)
    return GaussianState(state.mean[idx], state.cov[np.ix_(idx, idx)])


def move_mode(state: GaussianState, source: int, target: int) -> GaussianState:
    """Move one mode to a new position, shifting the others."""
    source = _check_mode(state.n_modes, source)
    target = _check_mode(state.n_modes, target)
    order = [m for m in range(state.n_modes) if m != source]
    order.insert(target, source)
    return permute_modes(state, order)


def reduced_state(state: GaussianState, modes: Iterable[int]) -> GaussianState:
    modes = [_check_mode(state.n_modes, m) for m in modes]
    if len(set(modes)) != len(modes) or not modes:
        raise ValidationError("Reduced state needs distinct, nonempty modes.")
    idx = _mode_indices(state.n_modes, modes)
    return GaussianState(state.mean[idx], state.cov[np.ix_(idx, idx)])


def standard_transform(
    kind: str,
    modes: Union[int, Sequence[int]],
    n_modes: int,
    value: Optional[float] = None,
) -> SymplecticTransform:
    """
    Build one of the named Gaussian gates on an n_modes register.

    cz(g): p_i -> p_i + g q_j, p_j -> p_j + g q_i
    shear(m): p -> p + m q
    fourier: q -> -p, p -> q
    displace_q(t) / displace_p(t): shift the mean only
    """
    kind = TransformKind(kind.upper() if isinstance(kind, str) else kind)
    modes = (modes,) if isinstance(modes, (int, np.integer)) else tuple(modes)
    for m in modes:
        _check_mode(n_modes, m)
    if len(set(modes)) != len(modes):
        raise ValidationError(f"Mode indices must be distinct, got {modes}.")

    expected = 2 if kind == TransformKind.CZ else 1
    if len(modes) != expected:
        raise ValidationError(f"{kind.label} acts on {expected} mode(s), got {len(modes)}.")
    if kind != TransformKind.FOURIER and value is None:
        raise ValidationError(f"{kind.label} needs a parameter value.")

    matrix = np.eye(2 * n_modes)
    shift = np.zeros(2 * n_modes)
    n = n_modes
    if kind == TransformKind.CZ:
        i, j = modes
        matrix[n + i, j] = value
        matrix[n + j, i] = value
    elif kind == TransformKind.SHEAR:
        (i,) = modes
        matrix[n + i, i] = value
    elif kind == TransformKind.FOURIER:
        (i,) = modes
        matrix[i, i] = 0.0
        matrix[n + i, n + i] = 0.0
        matrix[i, n + i] = -1.0
        matrix[n + i, i] = 1.0
    elif kind == TransformKind.DISPLACE_Q:
        shift[modes[0]] = value
    else:
        shift[n + modes[0]] = value
    return SymplecticTransform(matrix, shift)


def apply_symplectic(state: GaussianState, transform: SymplecticTransform) -> GaussianState:
    if transform.n_modes != state.n_modes:
        raise ValidationError(
            f"Transform acts on {transform.n_modes} modes, state has {state.n_modes}."
        )
    if not transform.is_symplectic():
        raise ValidationError(
            f"Transform is not symplectic (defect {transform.symplectic_defect():.3e})."
        )
    S = transform.matrix
    return GaussianState(S @ state.mean + transform.shift, S @ state.cov @ S.T)


def readout_vector(n_modes: int, mode: int, basis: str, shear: float = 0.0) -> np.ndarray:
    """Row vector v with r = v . x for the measured quadrature."""
    mode = _check_mode(n_modes, mode)
    basis = Quadrature(basis)
    v = np.zeros(2 * n_modes)
    if basis == Quadrature.Q:
        v[mode] = 1.0
    elif basis == Quadrature.P:
        v[n_modes + mode] = 1.0
        v[mode] = shear
    else:
        raise ValidationError("Heterodyne readout has two rows; use condition_heterodyne.")
    return v


def quadrature_marginal(
    state: GaussianState, mode: int, basis: str, shear: float = 0.0
) -> Tuple[float, float]:
    """(mean, variance) of the measured quadrature."""
    v = readout_vector(state.n_modes, mode, basis, shear)
    return float(v @ state.mean), float(v @ state.cov @ v)


def _condition_linear(
    state: GaussianState,
    readout: np.ndarray,
    values: np.ndarray,
    noise: np.ndarray,
    mode: int,
) -> Tuple[Optional[GaussianState], float]:
    """
    Condition on readout @ x + noise = values and drop `mode`.

    Schur-complement update with a pseudo-inverse on the measured block.
    """
    mu_r = readout @ state.mean
    c_rr = readout @ state.cov @ readout.T + noise
    c_xr = state.cov @ readout.T
    gain = c_xr @ np.linalg.pinv(c_rr, hermitian=True)
    mean = state.mean + gain @ (values - mu_r)
    cov = state.cov - gain @ c_xr.T
    density = float(
        stats.multivariate_normal(mu_r, c_rr, allow_singular=True).pdf(values)
    )

    n = state.n_modes
    if n == 1:
        return None, density
    keep = _mode_indices(n, [m for m in range(n) if m != mode])
    cov = cov[np.ix_(keep, keep)]
    return GaussianState(mean[keep], 0.5 * (cov + cov.T)), density


def condition_on_quadrature(
    state: GaussianState,
    mode: int,
    basis: str,
    outcome: float,
    shear: float = 0.0,
) -> Tuple[Optional[GaussianState], MeasurementOutcome]:
    """
    Homodyne measurement of q, or of p + shear*q, on one mode.

    The measured mode is removed: modes above it shift down by one. A
    one-mode state leaves nothing behind and None is returned in its place.
    """
    v = readout_vector(state.n_modes, mode, basis, shear)
    variance = float(v @ state.cov @ v)
    if variance <= VARIANCE_FLOOR:
        raise ValidationError(
            f"Measured quadrature on mode {mode} has variance {variance:.3e}; "
            "outcomes are not distributed."
        )
    remaining, density = _condition_linear(
        state, v[None, :], np.array([float(outcome)]), np.zeros((1, 1)), mode
    )
    logger.debug(f"Conditioned mode {mode} ({basis}) on {float(outcome):.6g}, density {density:.6g}")
    return remaining, MeasurementOutcome(
        mode=mode, basis=Quadrature(basis), value=float(outcome), density=density, shear=shear
    )


def condition_heterodyne(
    state: GaussianState, mode: int, outcome: Tuple[float, float]
) -> Tuple[Optional[GaussianState], MeasurementOutcome]:
    """Heterodyne as homodyne of both quadratures after adding half a vacuum unit."""
    n = state.n_modes
    mode = _check_mode(n, mode)
    readout = np.zeros((2, 2 * n))
    readout[0, mode] = 1.0
    readout[1, n + mode] = 1.0
    q_o, p_o = (float(x) for x in outcome)
    remaining, density = _condition_linear(
        state, readout, np.array([q_o, p_o]), 0.5 * np.eye(2), mode
    )
    return remaining, MeasurementOutcome(
        mode=mode, basis=Quadrature.HETERODYNE, value=(q_o, p_o), density=density
    )


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_quadrature(
    state: GaussianState,
    mode: int,
    basis: str,
    seed: SeedLike = None,
    shear: float = 0.0,
    size: Optional[int] = None,
):
    """Draw homodyne outcome(s) from the exact Gaussian marginal."""
    mu, variance = quadrature_marginal(state, mode, basis, shear)
    if variance <= VARIANCE_FLOOR:
        raise ValidationError(
            f"Cannot sample a quadrature with variance {variance:.3e}."
        )
    rng = make_rng(seed)
    draw = rng.normal(mu, np.sqrt(variance), size=size)
    return float(draw) if size is None else draw


def symplectic_eigenvalues(state: GaussianState) -> np.ndarray:
    """Williamson spectrum nu_1 <= ... <= nu_n of the covariance matrix."""
    cov = np.asarray(state.cov)
    if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL * _scale(cov):
        raise ValidationError("Covariance matrix must be symmetric.")
    omega = symplectic_form(state.n_modes)
    eigs = np.sort(np.abs(np.linalg.eigvals(1j * omega @ cov)))
    # eigenvalues come in +/- nu pairs
    return eigs[::2]


def is_physical(state: GaussianState, tol: float = PHYSICALITY_TOL) -> bool:
    cov = np.asarray(state.cov)
    if np.linalg.eigvalsh(cov).min() < -tol:
        return False
    return bool(symplectic_eigenvalues(state).min() >= 0.5 - tol)


def random_gaussian_state(
    n_modes: int,
    seed: SeedLike = None,
    max_s: float = 1.5,
    max_delta: float = 1.0,
    max_shift: float = 0.5,
) -> GaussianState:
    """Physical test state: squeezed-thermal product scrambled by random gates and shifts."""
    rng = make_rng(seed)
    state = tensor_product(
        *[
            squeezed_thermal_state(
                SqueezedThermalSpec(float(rng.uniform(1.0, max_s)), float(rng.uniform(0.0, max_delta)))
            )
            for _ in range(n_modes)
        ]
    )
    for _ in range(2 * n_modes):
        mode = int(rng.integers(n_modes))
        choice = rng.integers(3 if n_modes > 1 else 2)
        if choice == 0:
            gate = standard_transform(TransformKind.SHEAR, mode, n_modes, float(rng.uniform(-1, 1)))
        elif choice == 1:
            gate = standard_transform(TransformKind.FOURIER, mode, n_modes)
        else:
            other = int((mode + 1 + rng.integers(n_modes - 1)) % n_modes)
            gate = standard_transform(TransformKind.CZ, (mode, other), n_modes, float(rng.uniform(-1, 1)))
        state = apply_symplectic(state, gate)
    shift = rng.uniform(-max_shift, max_shift, size=2 * n_modes)
    return GaussianState(state.mean + shift, state.cov)
