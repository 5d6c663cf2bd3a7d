"""Ensemble simulation of sequential probe measurements.

Realizations are generated in fixed-size blocks. Block ``b`` of stream ``s``
draws from its own Philox generator keyed by ``(seed, s, b)``, so the samples
do not depend on how blocks are scheduled across workers; results are always
reduced in block order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .analytic import (
    NARROW_PEAK_LIMIT,
    assign_peaks,
    narrow_peak_ratio,
    posterior_given_mean,
    qbar_statistics,
)
from .errors import InsufficientSamples, RegimeError
from .model import EnsembleReport, ObservableSpectrum, ProbeConfig, Realization, Verdict

BLOCK_SIZE = 1024
# excess variance (in standard errors) beyond N_cr/N that counts as non-ergodic
VERDICT_THRESHOLD_SE = 5.0


@dataclass(frozen=True)
class RngSpec:
    """Seed plus worker substream index identifying a family of random streams."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if int(self.stream) < 0:
            raise ValueError(f"stream must be >= 0, got {self.stream!r}")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream", int(self.stream))

    def generator(self, block: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, block))
        return np.random.Generator(np.random.Philox(ss))


def _draw_branch(spec: ObservableSpectrum, rng: np.random.Generator, size: int) -> np.ndarray:
    cum = np.cumsum(spec.weights)
    branch = np.searchsorted(cum, rng.random(size), side="right")
    return np.minimum(branch, int(np.flatnonzero(spec.weights)[-1]))


def _draw(spec: ObservableSpectrum, cfg: ProbeConfig, rng: np.random.Generator, size: int):
    # branch once per realization, then N conditionally independent probes
    branch = _draw_branch(spec, rng, size)
    noise = rng.standard_normal((size, cfg.n_probes))
    positions = cfg.epsilon * spec.eigenvalues[branch][:, None] + cfg.sigma * noise
    return branch, positions


def _draw_summary(spec: ObservableSpectrum, cfg: ProbeConfig, rng: np.random.Generator, size: int):
    # (Q_1, Qbar) from Q_1 and the exact law of Q_2 + ... + Q_N given the branch
    branch = _draw_branch(spec, rng, size)
    n = cfg.n_probes
    center = cfg.epsilon * spec.eigenvalues[branch]
    z = rng.standard_normal((size, 2))
    first = center + cfg.sigma * z[:, 0]
    rest = (n - 1) * center + cfg.sigma * math.sqrt(n - 1) * z[:, 1]
    return branch, (first + rest) / n, first


def sample_realization(spec: ObservableSpectrum, cfg: ProbeConfig, rng: np.random.Generator) -> Realization:
    """Draw one realization from the joint density of the probe positions."""
    branch, positions = _draw(spec, cfg, rng, 1)
    return Realization(int(branch[0]), positions[0])


@dataclass(frozen=True)
class TimeAverageSample:
    realization: Realization
    qbar: float
    assigned_peak: int | None


def time_average(
    r: Realization, spec: ObservableSpectrum | None = None, cfg: ProbeConfig | None = None
) -> TimeAverageSample:
    """Arithmetic mean of the probe positions of one realization.

    With ``spec`` and ``cfg`` the mean is also assigned to a peak window.
    """
    qbar = float(np.mean(r.positions))
    peak = None
    if spec is not None and cfg is not None:
        r.check(spec, cfg)
        k = int(assign_peaks(spec, cfg, qbar))
        peak = k if k >= 0 else None
    return TimeAverageSample(r, qbar, peak)


@dataclass(frozen=True, eq=False)
class EnsembleSamples:
    """Raw per-realization outputs of :func:`simulate`, in realization order."""

    branch: np.ndarray
    qbar: np.ndarray
    first: np.ndarray
    positions: np.ndarray | None = None

    def __len__(self):
        return self.qbar.size

    def realizations(self):
        if self.positions is None:
            raise ValueError("positions were not kept; call simulate(..., keep_positions=True)")
        for b, q in zip(self.branch.tolist(), self.positions):
            yield Realization(b, q)


def _block(spec, cfg, rng_spec, index, size, keep_positions):
    rng = rng_spec.generator(index)
    if not keep_positions:
        return (*_draw_summary(spec, cfg, rng, size), None)
    branch, positions = _draw(spec, cfg, rng, size)
    return branch, positions.mean(axis=1), positions[:, 0].copy(), positions


def simulate(
    spec: ObservableSpectrum,
    cfg: ProbeConfig,
    m: int,
    rng: RngSpec,
    workers: int = 1,
    keep_positions: bool = False,
) -> EnsembleSamples:
    """Sample ``m`` realizations; output is identical for any ``workers``.

    Without ``keep_positions`` only ``Q_1`` and the time average are drawn,
    from their exact joint law, so the cost does not grow with N. The two
    modes therefore consume the random streams differently.
    """
    if m < 1:
        raise InsufficientSamples(f"need at least one realization, got {m}")
    sizes = [BLOCK_SIZE] * (m // BLOCK_SIZE)
    if m % BLOCK_SIZE:
        sizes.append(m % BLOCK_SIZE)
    jobs = [(spec, cfg, rng, i, size, keep_positions) for i, size in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _block(*job), jobs))
    else:
        parts = [_block(*job) for job in jobs]
    branch, qbar, first, positions = zip(*parts)
    return EnsembleSamples(
        branch=np.concatenate(branch),
        qbar=np.concatenate(qbar),
        first=np.concatenate(first),
        positions=np.concatenate(positions) if keep_positions else None,
    )


def mean_with_se(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def variance_with_se(x: np.ndarray) -> tuple[float, float]:
    """Unbiased sample variance and its delta-method standard error.

    Uses the sample fourth central moment, which stays valid for the
    strongly non-Gaussian mixtures met here.
    """
    m = x.size
    if m < 2:
        raise InsufficientSamples("variance needs at least two samples")
    d = x - np.mean(x)
    s2 = float(np.dot(d, d) / (m - 1))
    mu4 = float(np.mean(d**4))
    var_s2 = (mu4 - s2 * s2 * (m - 3) / (m - 1)) / m
    return s2, math.sqrt(max(var_s2, 0.0))


def summarize(spec: ObservableSpectrum, cfg: ProbeConfig, samples: EnsembleSamples) -> EnsembleReport:
    """Aggregate raw samples into an :class:`EnsembleReport` with verdict."""
    m = len(samples)
    if m < 2:
        raise InsufficientSamples(f"need m >= 2 realizations, got {m}")
    mean, mean_se = mean_with_se(samples.qbar)
    var, var_se = variance_with_se(samples.qbar)

    peaks = assign_peaks(spec, cfg, samples.qbar)
    counts = np.bincount(peaks[peaks >= 0], minlength=spec.size)
    fractions = counts / m
    occupancy_se = np.sqrt(fractions * (1.0 - fractions) / m)

    eps2 = cfg.epsilon**2
    baseline = cfg.n_critical / cfg.n_probes
    excess = var / eps2 - baseline
    se = var_se / eps2
    if se > 0:
        z = excess / se
    else:
        z = math.copysign(math.inf, excess) if excess != 0 else 0.0
    verdict = Verdict.NON_ERGODIC if excess > VERDICT_THRESHOLD_SE * se else Verdict.ERGODIC

    return EnsembleReport(
        n_realizations=m,
        epsilon=cfg.epsilon,
        qbar_mean=mean,
        qbar_mean_se=mean_se,
        qbar_var=var,
        qbar_var_se=var_se,
        n_critical=cfg.n_critical,
        n_probes=cfg.n_probes,
        peak_occupancy=tuple((n, float(f)) for n, f in enumerate(fractions)),
        peak_occupancy_se=tuple(float(s) for s in occupancy_se),
        unassigned_fraction=float(np.count_nonzero(peaks < 0) / m),
        verdict=verdict,
        decision_statistic=float(z),
    )


def run_ensemble(
    spec: ObservableSpectrum, cfg: ProbeConfig, m: int, rng: RngSpec, workers: int = 1
) -> EnsembleReport:
    """Simulate ``m`` realizations and test the time average for ergodicity.

    The verdict is ``NonErgodic`` when the sample variance of the time average,
    in units of eps^2, exceeds the eigenstate baseline ``N_cr/N`` by more than
    five standard errors.
    """
    if m < 2:
        raise InsufficientSamples(f"need m >= 2 realizations, got {m}")
    return summarize(spec, cfg, simulate(spec, cfg, m, rng, workers))


def compare_with_analytic(spec: ObservableSpectrum, cfg: ProbeConfig, report: EnsembleReport) -> dict:
    """Analytic mean/variance next to the estimates, with discrepancies in SE."""
    exact = qbar_statistics(spec, cfg)

    def z(est, ref, se):
        return (est - ref) / se if se > 0 else (0.0 if est == ref else math.copysign(math.inf, est - ref))

    return {
        "analytic": exact.to_dict(),
        "empirical": {
            "mean": report.qbar_mean,
            "mean_se": report.qbar_mean_se,
            "variance": report.qbar_var,
            "variance_se": report.qbar_var_se,
            "variance_over_eps2": report.variance_over_eps2,
            "excess_variance_over_eps2": report.excess_variance_over_eps2,
        },
        "discrepancy_se": {
            "mean": z(report.qbar_mean, exact.mean, report.qbar_mean_se),
            "variance": z(report.qbar_var, exact.variance, report.qbar_var_se),
        },
        "baseline_over_eps2": cfg.n_critical / cfg.n_probes,
        "var_a": spec.variance(),
        "decision_statistic": report.decision_statistic,
        "threshold_se": VERDICT_THRESHOLD_SE,
    }


@dataclass(frozen=True)
class StuckReport:
    """Outcome of the stuck-trajectory check.

    ``conditional_var`` estimates var(Qbar | Q_1) from the residual
    ``Qbar - Q_1/N`` pooled within the peak groups of Q_1.
    """

    n_realizations: int
    stuck_fraction: tuple[float, ...]
    stuck_fraction_se: tuple[float, ...]
    branch_agreement: float
    ks_statistics: tuple[float, ...]
    ks_pvalues: tuple[float, ...]
    ks_passed: bool
    conditional_var: float
    conditional_var_se: float
    expected_conditional_var: float

    @property
    def conditional_var_z(self) -> float:
        return (self.conditional_var - self.expected_conditional_var) / self.conditional_var_se


def stuck_trajectory_test(
    spec: ObservableSpectrum,
    cfg: ProbeConfig,
    rng: RngSpec,
    m: int = 10_000,
    workers: int = 1,
    alpha: float = 0.01,
) -> StuckReport:
    """Check that later probes stick to the peak selected by the first probe.

    Realizations are grouped by the peak nearest to Q_1. Within each group
    the later positions, standardized about that peak, are KS-tested per
    coordinate against N(0, 1) (Bonferroni over coordinates at level
    ``alpha``), and the spread of the time average given Q_1 is compared
    with ``(N-1) sigma^2 / N^2``.

    Raises
    ------
    RegimeError
        If sigma >= 0.5 * epsilon * (smallest eigenvalue gap).
    """
    ratio = narrow_peak_ratio(spec, cfg)
    if ratio >= NARROW_PEAK_LIMIT:
        raise RegimeError(f"sigma/(eps*gap) = {ratio:.3g} must be below {NARROW_PEAK_LIMIT}")
    if m < 2:
        raise InsufficientSamples(f"need m >= 2 realizations, got {m}")
    n = cfg.n_probes
    samples = simulate(spec, cfg, m, rng, workers, keep_positions=n > 1)
    centers = cfg.epsilon * spec.eigenvalues
    group = np.argmin(np.abs(samples.first[:, None] - centers), axis=1)

    counts = np.bincount(group, minlength=spec.size)
    frac = counts / m
    frac_se = np.sqrt(frac * (1.0 - frac) / m)

    ks_stat: list[float] = []
    ks_p: list[float] = []
    if n > 1:
        z = (samples.positions[:, 1:] - centers[group][:, None]) / cfg.sigma
        for col in z.T:
            res = stats.kstest(col, "norm")
            ks_stat.append(float(res.statistic))
            ks_p.append(float(res.pvalue))
    ks_passed = not ks_p or min(ks_p) * len(ks_p) > alpha

    expected = (n - 1) * cfg.sigma**2 / n**2
    if n > 1:
        resid = samples.qbar - samples.first / n
        occupied = np.flatnonzero(counts)
        group_means = np.zeros(spec.size)
        np.add.at(group_means, group, resid)
        group_means[occupied] /= counts[occupied]
        d = resid - group_means[group]
        dof = m - occupied.size
        if dof < 2:
            raise InsufficientSamples("too few realizations per peak to estimate a conditional variance")
        cvar = float(np.dot(d, d) / dof)
        mu4 = float(np.mean(d**4))
        cvar_se = math.sqrt(max((mu4 - cvar * cvar * (m - 3) / (m - 1)) / m, 0.0))
    else:
        cvar = float(np.var(samples.qbar - samples.first))
        cvar_se = 0.0

    return StuckReport(
        n_realizations=m,
        stuck_fraction=tuple(frac.tolist()),
        stuck_fraction_se=tuple(frac_se.tolist()),
        branch_agreement=float(np.mean(group == samples.branch)),
        ks_statistics=tuple(ks_stat),
        ks_pvalues=tuple(ks_p),
        ks_passed=ks_passed,
        conditional_var=cvar,
        conditional_var_se=cvar_se,
        expected_conditional_var=expected,
    )


def decimation_trajectory(spec: ObservableSpectrum, cfg: ProbeConfig, r: Realization) -> np.ndarray:
    """Posterior over eigenvalues after each prefix Q_1..Q_k, k = 0..N.

    Row 0 is the prior; row k conditions on the first k positions.
    """
    r.check(spec, cfg)
    return decimation_trajectories(spec, cfg, r.positions[None, :])[0]


def decimation_trajectories(spec: ObservableSpectrum, cfg: ProbeConfig, positions) -> np.ndarray:
    """Vectorized :func:`decimation_trajectory` for an ``(m, N)`` array; returns ``(m, N+1, K)``."""
    positions = np.asarray(positions, dtype=float)
    k = np.arange(1, positions.shape[1] + 1)
    prefix_means = np.cumsum(positions, axis=1) / k
    means = np.concatenate([np.zeros((positions.shape[0], 1)), prefix_means], axis=1)
    counts = np.concatenate([[0], k])
    post = posterior_given_mean(spec, cfg.epsilon, cfg.sigma, means, counts)
    post[:, 0, :] = spec.weights
    return post


def monte_carlo_recovery(
    spec: ObservableSpectrum, cfg: ProbeConfig, m: int, rng: RngSpec, workers: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble average of the final decimation posteriors, with standard errors."""
    if m < 2:
        raise InsufficientSamples(f"need m >= 2 realizations, got {m}")
    samples = simulate(spec, cfg, m, rng, workers)
    post = posterior_given_mean(spec, cfg.epsilon, cfg.sigma, samples.qbar, cfg.n_probes)
    return post.mean(axis=0), post.std(axis=0, ddof=1) / math.sqrt(m)
