"""Independent reference computations used by the tests.

Nothing here calls into the closed-form paths it is used to check.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np


def normal_pdf_mp(x, mu, sigma, dps=40):
    with mpmath.workdps(dps):
        return float(mpmath.npdf(mpmath.mpf(x), mpmath.mpf(mu), mpmath.mpf(sigma)))


def probe_packet(q, sigma):
    """Gaussian probe wave function whose squared modulus has width sigma."""
    return (2 * math.pi * sigma**2) ** -0.25 * np.exp(-(q**2) / (4 * sigma**2))


def bruteforce_reduced_density(spec, cfg, n_probes, points=4096, half_width=10.0):
    """Trace the probes out of the final system+probe state on a position grid.

    The final amplitude for branch n is c_n * prod_i chi(Q_i - eps a_n); the
    reduced matrix is the grid sum of Psi Psi^dagger over every probe
    coordinate.
    """
    c = spec.require_amplitudes()
    shifts = cfg.epsilon * spec.eigenvalues
    grid = np.linspace(shifts.min() - half_width * cfg.sigma, shifts.max() + half_width * cfg.sigma, points)
    dq = grid[1] - grid[0]
    chi = probe_packet(grid[None, :] - shifts[:, None], cfg.sigma)  # (K, points)
    if n_probes == 1:
        psi = c[:, None] * chi
        return (psi @ psi.conj().T) * dq
    if n_probes == 2:
        rho = np.zeros((spec.size, spec.size), dtype=complex)
        for j in range(points):
            # row Q_1 = grid[j], all Q_2
            psi = c[:, None] * chi[:, j : j + 1] * chi
            rho += psi @ psi.conj().T
        return rho * dq * dq
    raise ValueError("brute force only for one or two probes")


def sample_joint(spec, cfg, m, rng):
    """Two-stage draw written out directly, for moment oracles."""
    branch = rng.choice(spec.size, size=m, p=spec.weights)
    return cfg.epsilon * spec.eigenvalues[branch][:, None] + cfg.sigma * rng.standard_normal((m, cfg.n_probes))


def mean_and_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def var_and_se(x):
    x = np.asarray(x, dtype=float)
    m = x.size
    d = x - x.mean()
    s2 = float(d @ d / (m - 1))
    mu4 = float(np.mean(d**4))
    return s2, math.sqrt(max((mu4 - s2 * s2 * (m - 3) / (m - 1)) / m, 0.0))
