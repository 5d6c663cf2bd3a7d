from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from qnd_ergodicity.model import ProbeConfig, validate_spectrum

settings.register_profile(
    "fuzz",
    max_examples=100,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("fuzz")


@st.composite
def spectra(draw, max_levels=8, with_amplitudes=False, min_weight=0.0, min_levels=1, min_gap=0.05):
    k = draw(st.integers(min_levels, max_levels))
    start = draw(st.floats(-5.0, 5.0))
    gaps = draw(st.lists(st.floats(min_gap, 5.0), min_size=k - 1, max_size=k - 1))
    a = start + np.concatenate([[0.0], np.cumsum(gaps)])
    raw = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k)))
    if min_weight > 0:
        raw = min_weight + raw
    if raw.sum() <= 0:
        raw[draw(st.integers(0, k - 1))] = 1.0
    w = raw / raw.sum()
    w = w / w.sum()
    amps = None
    if with_amplitudes:
        phases = np.array(draw(st.lists(st.floats(0.0, 2 * math.pi), min_size=k, max_size=k)))
        amps = np.sqrt(w) * np.exp(1j * phases)
    return validate_spectrum(a, w, amps)


@st.composite
def probe_configs(draw, n_choices=(1, 2, 3, 4, 16, 64, 256)):
    eps = draw(st.floats(0.1, 10.0))
    sigma = draw(st.floats(0.1, 10.0))
    n = draw(st.sampled_from(n_choices))
    return ProbeConfig(eps, sigma, n)


@pytest.fixture
def qubit():
    return validate_spectrum([0.0, 1.0], [0.5, 0.5], [math.sqrt(0.5), math.sqrt(0.5)])


@pytest.fixture
def three_level():
    return validate_spectrum([0.0, 1.0, 2.0], [0.2, 0.3, 0.5], [math.sqrt(0.2), math.sqrt(0.3), math.sqrt(0.5)])


@pytest.fixture
def eigenstate():
    return validate_spectrum([1.5], [1.0], [1.0])
