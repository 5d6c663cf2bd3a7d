"""Domain types: observable spectra, probe configurations, realizations and
reduced density matrices.

All types are frozen; array-valued fields are stored read-only so instances
can be shared between worker threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    AmplitudeMismatch,
    BadIndex,
    ConfigError,
    LengthMismatch,
    MissingAmplitudes,
    NegativeWeight,
    NonincreasingEigenvalues,
    NormalizationError,
)

WEIGHT_TOL = 1e-12
RENORMALIZE_TOL = 1e-9
DENSITY_TOL = 1e-12
PSD_TOL = 1e-10


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ObservableSpectrum:
    """Distinct eigenvalues of the measured observable with their Born weights.

    Build instances through :func:`validate_spectrum`; the constructor checks
    the invariants but never renormalizes.
    """

    eigenvalues: np.ndarray
    weights: np.ndarray
    amplitudes: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues))
        object.__setattr__(self, "weights", _frozen(self.weights))
        if self.amplitudes is not None:
            object.__setattr__(self, "amplitudes", _frozen(self.amplitudes, complex))
        _check_spectrum(self.eigenvalues, self.weights, self.amplitudes, WEIGHT_TOL)

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    @property
    def has_amplitudes(self) -> bool:
        return self.amplitudes is not None

    def require_amplitudes(self) -> np.ndarray:
        if self.amplitudes is None:
            raise MissingAmplitudes(
                "state amplitudes are required for coherences; only Born weights were given"
            )
        return self.amplitudes

    def check_index(self, n: int) -> int:
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or not 0 <= n < self.size:
            raise BadIndex(f"branch index {n!r} outside 0..{self.size - 1}")
        return int(n)

    def mean(self) -> float:
        return float(np.dot(self.weights, self.eigenvalues))

    def second_moment(self) -> float:
        return float(np.dot(self.weights, self.eigenvalues**2))

    def variance(self) -> float:
        # centred form; the raw-moment difference cancels badly for offset spectra
        return float(np.dot(self.weights, (self.eigenvalues - self.mean()) ** 2))

    def min_gap(self) -> float:
        """Smallest spacing between adjacent eigenvalues (inf for one level)."""
        if self.size < 2:
            return math.inf
        return float(np.min(np.diff(self.eigenvalues)))

    def is_eigenstate(self) -> bool:
        return int(np.count_nonzero(self.weights)) == 1

    def to_dict(self) -> dict:
        out = {
            "eigenvalues": self.eigenvalues.tolist(),
            "weights": self.weights.tolist(),
        }
        if self.amplitudes is not None:
            out["amplitudes"] = [[c.real, c.imag] for c in self.amplitudes.tolist()]
        return out


def _check_spectrum(a, w, c, tol):
    if a.ndim != 1 or w.ndim != 1 or len(a) == 0 or len(a) != len(w):
        raise LengthMismatch(
            f"eigenvalues ({a.size}) and weights ({w.size}) must be equal-length, non-empty lists"
        )
    if c is not None and (c.ndim != 1 or len(c) != len(a)):
        raise LengthMismatch(f"amplitudes ({c.size}) must match eigenvalues ({a.size})")
    if not np.all(np.isfinite(a)):
        raise NonincreasingEigenvalues("eigenvalues must be finite")
    if np.any(np.diff(a) <= 0):
        raise NonincreasingEigenvalues("eigenvalues must be strictly increasing")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise NegativeWeight("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > tol:
        raise NormalizationError(f"weights sum to {w.sum()!r}, not 1")
    if c is not None:
        mismatch = np.abs(np.abs(c) ** 2 - w)
        if not np.all(mismatch <= tol):
            k = int(np.argmax(mismatch))
            raise AmplitudeMismatch(f"|c[{k}]|^2 = {abs(c[k]) ** 2!r} but weight is {w[k]!r}")


def validate_spectrum(
    eigenvalues: Sequence[float],
    weights: Sequence[float],
    amplitudes: Sequence[complex] | None = None,
) -> ObservableSpectrum:
    """Validate raw spectrum lists and build an :class:`ObservableSpectrum`.

    Weights whose sum is within ``1e-9`` of one are renormalized (amplitudes
    are rescaled by the same factor); a larger deviation is rejected.

    Raises
    ------
    NonincreasingEigenvalues, NegativeWeight, NormalizationError,
    AmplitudeMismatch, LengthMismatch
    """
    a = np.asarray(eigenvalues, dtype=float)
    w = np.asarray(weights, dtype=float)
    c = None if amplitudes is None else np.asarray(amplitudes, dtype=complex)
    _check_spectrum(a, w, c, tol=math.inf)

    total = float(w.sum())
    if abs(total - 1.0) >= RENORMALIZE_TOL:
        raise NormalizationError(f"weights sum to {total!r}; deviation from 1 is >= {RENORMALIZE_TOL}")
    if c is not None:
        mismatch = np.abs(np.abs(c) ** 2 - w)
        if not np.all(mismatch <= WEIGHT_TOL):
            k = int(np.argmax(mismatch))
            raise AmplitudeMismatch(f"|c[{k}]|^2 = {abs(c[k]) ** 2!r} but weight is {w[k]!r}")
        c = c / math.sqrt(total)
    w = w / total
    return ObservableSpectrum(a, w, c)


@dataclass(frozen=True)
class ProbeConfig:
    """Coupling strength, probe resolution and number of probes."""

    epsilon: float
    sigma: float
    n_probes: int

    def __post_init__(self):
        for name in ("epsilon", "sigma"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float, np.floating)) and math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a finite positive number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if isinstance(self.n_probes, bool) or not isinstance(self.n_probes, (int, np.integer)) or self.n_probes < 1:
            raise ConfigError(f"n_probes must be an integer >= 1, got {self.n_probes!r}")
        object.__setattr__(self, "n_probes", int(self.n_probes))
        nc = self.n_critical
        if not (math.isfinite(nc) and nc > 0):
            raise ConfigError(f"(sigma/epsilon)^2 = {nc!r} is not finite and positive")

    @property
    def n_critical(self) -> float:
        return (self.sigma / self.epsilon) ** 2

    def with_probes(self, n_probes: int) -> "ProbeConfig":
        return ProbeConfig(self.epsilon, self.sigma, n_probes)

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "sigma": self.sigma, "n_probes": self.n_probes}


def n_critical(config: ProbeConfig) -> float:
    """Probe count at which measurement back-action becomes appreciable, (sigma/epsilon)^2."""
    return config.n_critical


@dataclass(frozen=True, eq=False)
class Realization:
    """One sampled run: the latent branch and the N detected probe positions.

    ``branch`` is simulator-internal; a physical detector never sees it.
    """

    branch: int
    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", _frozen(self.positions))
        if self.positions.ndim != 1 or self.positions.size == 0:
            raise LengthMismatch("positions must be a non-empty 1-d sequence")
        object.__setattr__(self, "branch", int(self.branch))

    @property
    def n_probes(self) -> int:
        return self.positions.size

    def check(self, spec: ObservableSpectrum, cfg: ProbeConfig) -> None:
        spec.check_index(self.branch)
        if self.n_probes != cfg.n_probes:
            raise LengthMismatch(f"realization has {self.n_probes} positions, config expects {cfg.n_probes}")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Reduced density operator of the system in the observable eigenbasis."""

    entries: np.ndarray

    def __post_init__(self):
        rho = _frozen(self.entries, complex)
        object.__setattr__(self, "entries", rho)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise LengthMismatch(f"density matrix must be square, got shape {rho.shape}")
        if not np.allclose(rho, rho.conj().T, rtol=0.0, atol=DENSITY_TOL):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > DENSITY_TOL:
            raise ValueError(f"density matrix trace is {np.trace(rho)!r}")
        if np.linalg.eigvalsh(rho).min() < -PSD_TOL:
            raise ValueError("density matrix is not positive semidefinite")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.entries))

    def to_json_dict(self) -> dict:
        return {
            "shape": list(self.entries.shape),
            "entries": [[z.real, z.imag] for z in self.entries.ravel(order="C").tolist()],
        }


class Verdict(str, enum.Enum):
    ERGODIC = "Ergodic"
    NON_ERGODIC = "NonErgodic"


@dataclass(frozen=True)
class EnsembleReport:
    """Monte Carlo summary of the time average over an ensemble of realizations.

    ``decision_statistic`` is the excess of the sample variance of the time
    average (in units of epsilon^2) over the eigenstate baseline ``N_cr/N``,
    expressed in standard errors.
    """

    n_realizations: int
    epsilon: float
    qbar_mean: float
    qbar_mean_se: float
    qbar_var: float
    qbar_var_se: float
    n_critical: float
    n_probes: int
    peak_occupancy: tuple[tuple[int, float], ...]
    peak_occupancy_se: tuple[float, ...]
    unassigned_fraction: float
    verdict: Verdict
    decision_statistic: float
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        fractions = [f for _, f in self.peak_occupancy]
        if any(not 0.0 <= f <= 1.0 for f in fractions) or sum(fractions) > 1.0 + 1e-12:
            raise ValueError("peak occupancy fractions must lie in [0, 1] and sum to <= 1")

    @property
    def variance_over_eps2(self) -> float:
        return self.qbar_var / self.epsilon**2

    @property
    def variance_over_eps2_se(self) -> float:
        return self.qbar_var_se / self.epsilon**2

    @property
    def excess_variance_over_eps2(self) -> float:
        """Sample variance / eps^2 minus the eigenstate baseline N_cr/N."""
        return self.variance_over_eps2 - self.n_critical / self.n_probes

    def to_json_dict(self) -> dict:
        return {
            "n_realizations": self.n_realizations,
            "qbar_mean": self.qbar_mean,
            "qbar_mean_se": self.qbar_mean_se,
            "qbar_var": self.qbar_var,
            "qbar_var_se": self.qbar_var_se,
            "n_critical": self.n_critical,
            "peak_occupancy": [[n, f] for n, f in self.peak_occupancy],
            "unassigned_fraction": self.unassigned_fraction,
            "verdict": self.verdict.value,
        }
