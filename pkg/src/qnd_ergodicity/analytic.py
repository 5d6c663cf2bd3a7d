"""Closed-form distributions of the N-probe von Neumann measurement model.

Every probe is a Gaussian packet of width ``sigma`` shifted by ``epsilon * a_n``
when the system sits in eigenvalue branch ``n``. Given the branch the probe
positions are independent normals; marginally they form a mixture over
branches weighted by the Born weights. Everything below follows from that
structure.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad, quad_vec
from scipy.special import logsumexp

from .errors import (
    AllZeroPosterior,
    LengthMismatch,
    QuadratureFailure,
    RegimeWarning,
)
from .mixture import GaussianMixture1D, normal_logpdf
from .model import DensityMatrix, ObservableSpectrum, ProbeConfig

# half-width, in units of sigma/sqrt(N), of the window that assigns a time
# average to a peak
PEAK_HALF_WIDTH = 5.0
# half-width, in component std devs, of the recovery integration windows
RECOVERY_HALF_WIDTH = 10.0
RECOVERY_TOL = 1e-8
# sigma / (epsilon * min gap) above which the narrow-peak formulas are unreliable
NARROW_PEAK_LIMIT = 0.5


def _positions(cfg: ProbeConfig, positions, batch: bool = False) -> np.ndarray:
    q = np.asarray(positions, dtype=float)
    ok = q.ndim >= 1 if batch else q.ndim == 1
    if not ok or q.shape[-1] != cfg.n_probes:
        raise LengthMismatch(f"expected {cfg.n_probes} probe positions, got shape {q.shape}")
    return q


def _log_weights(spec: ObservableSpectrum) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(spec.weights)


def log_branch_likelihoods(spec: ObservableSpectrum, cfg: ProbeConfig, positions) -> np.ndarray:
    """log prod_i N(Q_i; eps*a_n, sigma^2) for every branch n.

    ``positions`` has shape ``(..., N)``; the result has shape ``(..., K)``.
    """
    q = _positions(cfg, positions, batch=True)
    centers = cfg.epsilon * spec.eigenvalues
    return normal_logpdf(q[..., :, None], centers, cfg.sigma).sum(axis=-2)


def log_joint_density(spec: ObservableSpectrum, cfg: ProbeConfig, positions):
    """log of :func:`joint_density`; accepts a batch of shape ``(..., N)``."""
    out = logsumexp(_log_weights(spec) + log_branch_likelihoods(spec, cfg, positions), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def joint_density(spec: ObservableSpectrum, cfg: ProbeConfig, positions: Sequence[float]):
    """Joint density of the N detected probe positions.

    Evaluated in log space; the product of N normal densities underflows in
    linear space for a few hundred probes. The returned value itself may
    still underflow to 0 when it is below the double-precision range. A
    ``(..., N)`` array of position vectors gives an array of densities.
    """
    logp = log_joint_density(spec, cfg, positions)
    return np.exp(logp) if isinstance(logp, np.ndarray) else math.exp(logp)


def joint_density_with_branch(
    spec: ObservableSpectrum, cfg: ProbeConfig, n: int, positions: Sequence[float]
) -> float:
    """Joint density of branch ``n`` together with the N probe positions."""
    n = spec.check_index(n)
    w = spec.weights[n]
    if w == 0:
        _positions(cfg, positions)
        return 0.0
    return math.exp(math.log(w) + log_branch_likelihoods(spec, cfg, positions)[n])


@dataclass(frozen=True)
class ProbeMoments:
    mean_q: float
    second_q: float
    cross_qq: float
    cov_qq: float
    var_q: float

    def to_dict(self) -> dict:
        return asdict(self)


def probe_moments(spec: ObservableSpectrum, cfg: ProbeConfig) -> ProbeMoments:
    """First and second moments of the probe positions in the final state.

    The single-probe moments do not depend on the probe index, and the
    covariance between two distinct probes does not depend on the pair:
    it stays at ``eps^2 var(A)`` however far apart the probes are.
    """
    eps2 = cfg.epsilon**2
    mean_a, second_a, var_a = spec.mean(), spec.second_moment(), spec.variance()
    return ProbeMoments(
        mean_q=cfg.epsilon * mean_a,
        second_q=eps2 * second_a + cfg.sigma**2,
        cross_qq=eps2 * second_a,
        cov_qq=eps2 * var_a,
        var_q=eps2 * var_a + cfg.sigma**2,
    )


@dataclass(frozen=True)
class QbarStatistics:
    mean: float
    variance: float
    variance_over_eps2: float
    n_critical: float

    def to_dict(self) -> dict:
        return asdict(self)


def qbar_statistics(spec: ObservableSpectrum, cfg: ProbeConfig) -> QbarStatistics:
    """Ensemble mean and variance of the time average of the N probe positions.

    The variance is assembled from the pair covariance and the single-probe
    variance, then checked against ``var(A) + N_cr/N`` (in units of eps^2).
    """
    m = probe_moments(spec, cfg)
    n = cfg.n_probes
    variance = (n - 1) / n * m.cov_qq + m.var_q / n
    over_eps2 = variance / cfg.epsilon**2
    expected = spec.variance() + cfg.n_critical / n
    if abs(over_eps2 - expected) > 1e-12 * abs(expected):
        raise ArithmeticError(
            f"time-average variance {over_eps2!r} disagrees with var(A) + N_cr/N = {expected!r}"
        )
    return QbarStatistics(
        mean=m.mean_q, variance=variance, variance_over_eps2=over_eps2, n_critical=cfg.n_critical
    )


def qbar_density(spec: ObservableSpectrum, cfg: ProbeConfig) -> GaussianMixture1D:
    """Ensemble density of the time average: one peak of width sigma/sqrt(N) per eigenvalue."""
    std = cfg.sigma / math.sqrt(cfg.n_probes)
    return GaussianMixture1D.from_arrays(cfg.epsilon * spec.eigenvalues, std, spec.weights)


def peak_windows(spec: ObservableSpectrum, cfg: ProbeConfig) -> np.ndarray:
    """``(K, 2)`` array of assignment windows ``eps*a_n +/- 5 sigma/sqrt(N)``."""
    half = PEAK_HALF_WIDTH * cfg.sigma / math.sqrt(cfg.n_probes)
    centers = cfg.epsilon * spec.eigenvalues
    return np.stack([centers - half, centers + half], axis=1)


def assign_peaks(spec: ObservableSpectrum, cfg: ProbeConfig, qbar) -> np.ndarray:
    """Peak index for each time average, or -1.

    A value is assigned to peak ``n`` only if it lies inside exactly one
    window; values in no window or in several overlapping windows are left
    unassigned.
    """
    qbar = np.asarray(qbar, dtype=float)
    win = peak_windows(spec, cfg)
    inside = (qbar[..., None] >= win[:, 0]) & (qbar[..., None] <= win[:, 1])
    hits = inside.sum(axis=-1)
    return np.where(hits == 1, np.argmax(inside, axis=-1), -1)


def peak_areas(spec: ObservableSpectrum, cfg: ProbeConfig, half_width: float = PEAK_HALF_WIDTH) -> np.ndarray:
    """Area of the time-average density inside each peak window, by quadrature."""
    density = qbar_density(spec, cfg)
    areas = []
    for (lo, hi), center in zip(density.windows(half_width), density.centers):
        val, _ = quad(lambda x: float(density.pdf(x)), lo, hi, points=[center], epsabs=1e-14, epsrel=1e-12, limit=200)
        areas.append(val)
    return np.array(areas)


def narrow_peak_ratio(spec: ObservableSpectrum, cfg: ProbeConfig) -> float:
    """sigma / (epsilon * smallest eigenvalue gap); 0 for a single level."""
    return cfg.sigma / (cfg.epsilon * spec.min_gap())


def _warn_regime(spec: ObservableSpectrum, cfg: ProbeConfig) -> None:
    ratio = narrow_peak_ratio(spec, cfg)
    if ratio >= NARROW_PEAK_LIMIT:
        warnings.warn(
            f"sigma/(eps*gap) = {ratio:.3g} >= {NARROW_PEAK_LIMIT}; "
            "the one-branch conditional is a poor approximation here",
            RegimeWarning,
            stacklevel=3,
        )


@dataclass(frozen=True)
class ConditionalProduct:
    """Approximate density of Q_2..Q_N given Q_1: independent normals about Q_1."""

    q1: float
    sigma: float
    n_coordinates: int

    @property
    def marginals(self) -> list[GaussianMixture1D]:
        one = GaussianMixture1D(((self.q1, self.sigma, 1.0),))
        return [one] * self.n_coordinates

    def logpdf(self, rest) -> float:
        rest = np.asarray(rest, dtype=float)
        if rest.shape != (self.n_coordinates,):
            raise LengthMismatch(f"expected {self.n_coordinates} positions, got shape {rest.shape}")
        return float(normal_logpdf(rest, self.q1, self.sigma).sum())

    def pdf(self, rest) -> float:
        return math.exp(self.logpdf(rest))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.q1 + self.sigma * rng.standard_normal((size, self.n_coordinates))


def conditional_positions_given_first(
    spec: ObservableSpectrum, cfg: ProbeConfig, q1_at_branch: int
) -> ConditionalProduct:
    """One-branch approximation to the density of Q_2..Q_N given Q_1 = eps*a_n0.

    Once the first probe lands on a peak the remaining probes behave as
    independent normals centred on it. Valid when sigma is small against
    eps times the eigenvalue gap; a :class:`RegimeWarning` is emitted
    otherwise. :func:`exact_conditional_density` gives the exact value.
    """
    n0 = spec.check_index(q1_at_branch)
    _warn_regime(spec, cfg)
    return ConditionalProduct(
        q1=cfg.epsilon * float(spec.eigenvalues[n0]), sigma=cfg.sigma, n_coordinates=cfg.n_probes - 1
    )


def exact_conditional_density(spec: ObservableSpectrum, cfg: ProbeConfig, q1: float, rest) -> float:
    """Exact density of Q_2..Q_N given Q_1, by Bayes from the joint densities."""
    rest = np.asarray(rest, dtype=float)
    full = np.concatenate([[q1], rest])
    log_num = log_joint_density(spec, cfg, full)
    log_den = log_joint_density(spec, cfg.with_probes(1), [q1])
    return math.exp(log_num - log_den)


def qbar_density_given_first(cfg: ProbeConfig, q1: float) -> GaussianMixture1D:
    """Density of the time average once Q_1 sits on a peak.

    A single normal centred at ``q1`` with variance ``(N-1) sigma^2 / N^2``;
    for ``N == 1`` this is a point mass at ``q1``.
    """
    n = cfg.n_probes
    std = cfg.sigma * math.sqrt(n - 1) / n
    return GaussianMixture1D(((float(q1), std, 1.0),))


def coherence_damping(spec: ObservableSpectrum, cfg: ProbeConfig, n_probes: int | None = None) -> np.ndarray:
    """Matrix of factors exp(-N (a_n - a_n')^2 / (8 N_cr)) multiplying the coherences."""
    n = cfg.n_probes if n_probes is None else n_probes
    if n < 0:
        raise ValueError("number of probes must be non-negative")
    diff = spec.eigenvalues[:, None] - spec.eigenvalues[None, :]
    return np.exp(-(n / (8.0 * cfg.n_critical)) * diff**2)


def reduced_density(spec: ObservableSpectrum, cfg: ProbeConfig, n_probes: int | None = None) -> DensityMatrix:
    """Reduced state of the system after coupling to the probes.

    Populations are untouched; coherences decay with the overlap of the
    shifted probe packets. ``n_probes`` overrides the config count and may be
    zero (no coupling at all).

    Raises
    ------
    MissingAmplitudes
        If the spectrum carries only Born weights.
    """
    c = spec.require_amplitudes()
    rho = np.outer(c, c.conj()) * coherence_damping(spec, cfg, n_probes)
    # the outer product gives |c_n|^2, equal to W_n only up to rounding
    rho[np.diag_indices_from(rho)] = spec.weights
    return DensityMatrix(rho)


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2)."""
    r = rho.entries
    return float(np.real(np.vdot(r.conj().T, r)))


def posterior_given_mean(
    spec: ObservableSpectrum, epsilon: float, sigma: float, qbar, n_probes
) -> np.ndarray:
    """Branch posterior given the time average of ``n_probes`` positions.

    Broadcasts over ``qbar`` and ``n_probes``; the branch axis is last.
    ``n_probes == 0`` gives the prior.
    """
    qbar = np.asarray(qbar, dtype=float)[..., None]
    n = np.asarray(n_probes, dtype=float)[..., None]
    ratio2 = (sigma / epsilon) ** 2
    log_post = _log_weights(spec) - n * (spec.eigenvalues - qbar / epsilon) ** 2 / (2.0 * ratio2)
    top = np.max(log_post, axis=-1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise AllZeroPosterior("posterior log-weights are all -inf")
    post = np.exp(log_post - top)
    total = post.sum(axis=-1, keepdims=True)
    if np.any(total <= 0) or not np.all(np.isfinite(total)):
        raise AllZeroPosterior("posterior weights underflowed")
    return post / total


def decimation(
    spec: ObservableSpectrum,
    cfg: ProbeConfig,
    positions: Sequence[float] | None = None,
    *,
    qbar: float | None = None,
) -> np.ndarray:
    """Posterior probabilities of the eigenvalues given the detected probes.

    Pass either the full list of ``cfg.n_probes`` positions or their mean
    ``qbar``; with Gaussian probes the posterior depends on the positions only
    through the mean. The Born weights get multiplied by a Gaussian slice of
    width ``sigma / (epsilon sqrt(N))`` centred at ``qbar / epsilon``.
    """
    if (positions is None) == (qbar is None):
        raise TypeError("pass exactly one of positions or qbar")
    if positions is not None:
        qbar = float(np.mean(_positions(cfg, positions)))
    return posterior_given_mean(spec, cfg.epsilon, cfg.sigma, qbar, cfg.n_probes)


def recover_born_weights(spec: ObservableSpectrum, cfg: ProbeConfig, tol: float = RECOVERY_TOL) -> np.ndarray:
    """Average the decimation posterior over the ensemble density of the time average.

    Integrates ``p(a_n | qbar) p(qbar)`` over the union of ``+/-10`` std
    windows of the time-average peaks with adaptive Gauss-Kronrod quadrature.
    The result should reproduce the Born weights.

    Raises
    ------
    QuadratureFailure
        If the accumulated error estimate exceeds ``tol``.
    """
    density = qbar_density(spec, cfg)
    centers = density.centers[spec.weights > 0]

    def integrand(x):
        post = posterior_given_mean(spec, cfg.epsilon, cfg.sigma, x, cfg.n_probes)
        return post * float(density.pdf(x))

    total = np.zeros(spec.size)
    err_total = 0.0
    for lo, hi in density.support(RECOVERY_HALF_WIDTH):
        inner = [c for c in centers if lo < c < hi]
        try:
            val, err = quad_vec(
                integrand, lo, hi, epsabs=tol * 1e-3, epsrel=0.0, norm="max",
                limit=max(2000, 200 * spec.size), points=inner or None,
            )
        except Exception as exc:
            raise QuadratureFailure(f"quadrature on [{lo}, {hi}] failed: {exc}") from exc
        total += val
        err_total += float(err)
    if not err_total <= tol:
        raise QuadratureFailure(f"quadrature error estimate {err_total:.3g} exceeds {tol:.3g}")
    return total
