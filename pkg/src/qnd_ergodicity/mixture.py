"""One-dimensional Gaussian mixtures.

The time-average density, the single-probe marginal and the conditional
densities are all finite mixtures of normals; this module evaluates them in
log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.special import logsumexp, ndtr

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def normal_logpdf(x, mean, std):
    z = (np.asarray(x, dtype=float) - mean) / std
    return -0.5 * z * z - np.log(std) - _LOG_SQRT_2PI


def merge_intervals(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Union of closed intervals as a sorted list of disjoint intervals."""
    merged: list[list[float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


@dataclass(frozen=True, eq=False)
class GaussianMixture1D:
    """Finite mixture of normal densities.

    A component with ``std_dev == 0`` is a point mass. Moments and the CDF
    handle it; :meth:`pdf` refuses, since the density does not exist.
    """

    components: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        comps = tuple((float(c), float(s), float(w)) for c, s, w in self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        object.__setattr__(self, "components", comps)
        if any(not (math.isfinite(c) and math.isfinite(s)) or s < 0 for c, s, _ in comps):
            raise ValueError("component centers must be finite and std devs non-negative")
        w = self.weights
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must be non-negative and sum to 1, got {w.sum()!r}")

    @classmethod
    def from_arrays(cls, centers, stds, weights) -> "GaussianMixture1D":
        centers, stds, weights = np.broadcast_arrays(
            np.asarray(centers, float), np.asarray(stds, float), np.asarray(weights, float)
        )
        return cls(tuple(zip(centers.tolist(), stds.tolist(), weights.tolist())))

    @property
    def centers(self) -> np.ndarray:
        return np.array([c for c, _, _ in self.components])

    @property
    def std_devs(self) -> np.ndarray:
        return np.array([s for _, s, _ in self.components])

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, _, w in self.components])

    @property
    def is_degenerate(self) -> bool:
        return bool(np.any(self.std_devs == 0))

    def mean(self) -> float:
        return float(np.dot(self.weights, self.centers))

    def variance(self) -> float:
        c, s, w = self.centers, self.std_devs, self.weights
        return float(np.dot(w, s**2 + (c - np.dot(w, c)) ** 2))

    def logpdf(self, x) -> np.ndarray:
        if self.is_degenerate:
            raise ValueError("density of a point-mass component is undefined")
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        terms = logw + normal_logpdf(x[..., None], self.centers, self.std_devs)
        return logsumexp(terms, axis=-1)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)[..., None]
        c, s, w = self.centers, self.std_devs, self.weights
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(s > 0, (x - c) / np.where(s > 0, s, 1.0), np.where(x >= c, np.inf, -np.inf))
        return np.sum(w * ndtr(z), axis=-1)

    def log_component_densities(self, x) -> np.ndarray:
        """log(w_k) + log N(x; c_k, s_k^2), shape ``x.shape + (K,)``."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logw + normal_logpdf(x[..., None], self.centers, self.std_devs)

    def windows(self, half_width: float) -> list[tuple[float, float]]:
        """Per-component intervals ``center +/- half_width * std``."""
        return [(c - half_width * s, c + half_width * s) for c, s, _ in self.components]

    def support(self, half_width: float) -> list[tuple[float, float]]:
        """Merged union of the component windows with positive weight."""
        return merge_intervals(
            win for win, (_, _, w) in zip(self.windows(half_width), self.components) if w > 0
        )

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        k = rng.choice(len(self.components), size=size, p=self.weights)
        return self.centers[k] + self.std_devs[k] * rng.standard_normal(size)
