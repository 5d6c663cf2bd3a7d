"""Exception and warning types raised across the package."""

from __future__ import annotations


class QNDError(Exception):
    """Base class for every domain error raised by this package."""


class SpectrumError(QNDError, ValueError):
    pass


class NonincreasingEigenvalues(SpectrumError):
    pass


class NegativeWeight(SpectrumError):
    pass


class NormalizationError(SpectrumError):
    pass


class AmplitudeMismatch(SpectrumError):
    pass


class MissingAmplitudes(SpectrumError):
    pass


class LengthMismatch(QNDError, ValueError):
    pass


class BadIndex(QNDError, IndexError):
    pass


class AllZeroPosterior(QNDError, FloatingPointError):
    """Every posterior weight underflowed; indicates a numerical bug."""


class QuadratureFailure(QNDError, RuntimeError):
    pass


class InsufficientSamples(QNDError, ValueError):
    pass


class RegimeError(QNDError, ValueError):
    """The probe resolution is too coarse for the narrow-peak approximation."""


class ConfigError(QNDError, ValueError):
    pass


class CurveResolutionError(QNDError, RuntimeError):
    """A sampled density curve failed its trapezoid normalization check."""


class RegimeWarning(UserWarning):
    """Emitted when an approximation is used outside its validity regime."""
