"""Exception hierarchy shared by the package.

Input/configuration problems derive from :class:`ValueError`; numerical
failures derive from :class:`numpy.linalg.LinAlgError` so that callers that
already guard linear algebra keep working.
"""

import numpy as np


class PatchworkError(Exception):
    """Base class for every error raised by this package."""


class InputError(PatchworkError, ValueError):
    """Malformed arguments: wrong shapes, mismatched lengths, bad values."""


class ConfigurationError(PatchworkError, ValueError):
    """Valid inputs that cannot be combined, e.g. too many regions for N."""


class SizeError(InputError):
    """A dense reference routine was asked to exceed its size guardrail."""


class StateError(PatchworkError, RuntimeError):
    """Operation requested on an object in the wrong state."""


class NumericalError(PatchworkError, np.linalg.LinAlgError):
    """Base for failures of the numerical pipeline."""


class FactorizationError(NumericalError):
    """Cholesky factorization hit a non-positive pivot.

    Attributes
    ----------
    pivot : int or None
        Index (in the caller's ordering) of the failing pivot.
    block : int or None
        Block id when raised from a block-diagonal factorization.
    """

    def __init__(self, message, pivot=None, block=None):
        super().__init__(message)
        self.pivot = pivot
        self.block = block


class FitError(NumericalError):
    """Model fitting failed (e.g. the Schur complement is indefinite)."""


class SamplingError(NumericalError):
    """Rejection sampling of boundary points ran out of attempts."""


class OptimizationError(NumericalError):
    """Every likelihood evaluation of the optimizer was infinite."""
