"""Sequential quantum non-demolition measurements in the N-probe von Neumann model.

Closed-form distributions live in :mod:`.analytic`, ensemble simulation and
the ergodicity test in :mod:`.montecarlo`, and the command-line front end in
:mod:`.cli`.
"""

from .analytic import (
    decimation,
    joint_density,
    joint_density_with_branch,
    probe_moments,
    purity,
    qbar_density,
    qbar_density_given_first,
    qbar_statistics,
    recover_born_weights,
    reduced_density,
)
from .mixture import GaussianMixture1D
from .model import (
    DensityMatrix,
    EnsembleReport,
    ObservableSpectrum,
    ProbeConfig,
    Realization,
    Verdict,
    n_critical,
    validate_spectrum,
)
from .montecarlo import RngSpec, run_ensemble, sample_realization, time_average

__all__ = [
    "DensityMatrix",
    "EnsembleReport",
    "GaussianMixture1D",
    "ObservableSpectrum",
    "ProbeConfig",
    "Realization",
    "RngSpec",
    "Verdict",
    "decimation",
    "joint_density",
    "joint_density_with_branch",
    "n_critical",
    "probe_moments",
    "purity",
    "qbar_density",
    "qbar_density_given_first",
    "qbar_statistics",
    "recover_born_weights",
    "reduced_density",
    "run_ensemble",
    "sample_realization",
    "time_average",
    "validate_spectrum",
]
