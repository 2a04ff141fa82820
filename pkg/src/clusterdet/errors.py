"""Exception hierarchy shared by every clusterdet module."""

import numpy as np


class ClusterDetError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ClusterDetError, ValueError):
    """Malformed input: wrong shape, non-finite entries, broken invariants."""


class ConfigError(InvalidInputError):
    """A scenario or sub-configuration failed validation."""


class NumericalFailure(ClusterDetError, np.linalg.LinAlgError):
    """A numerical routine failed (no convergence, breakdown, too many failed trials)."""


class NotPositiveDefiniteError(NumericalFailure):
    """Cholesky factorization hit a non-positive pivot.

    ``index`` is the zero-based position of the failing pivot.
    """

    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"matrix is not positive definite (pivot {self.index} <= 0)")


class SingularTriangularError(NumericalFailure):
    """Triangular solve with an exactly zero diagonal entry at ``index``."""

    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"triangular matrix is singular (zero diagonal at {self.index})")


class OutputError(ClusterDetError, OSError):
    """Writing results failed; the message names the offending path."""
