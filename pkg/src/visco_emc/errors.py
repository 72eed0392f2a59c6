"""Exception types shared across the package."""

from __future__ import annotations


class ViscoEMCError(Exception):
    """Base class for all package errors."""


class SingularTensorError(ViscoEMCError, ValueError):
    """Raised when a tensor that must be inverted has a (near) zero determinant."""


class NonPositiveJacobianError(ViscoEMCError, ValueError):
    """Raised when det F <= 0, i.e. an element has inverted."""


class UnsupportedSchemeError(ViscoEMCError, ValueError):
    """Raised when an operation is requested for a scheme that does not define it."""


class ConvergenceError(ViscoEMCError, RuntimeError):
    """Raised when the Newton corrector fails to meet the stopping criteria."""

    def __init__(self, message: str, step: int | None = None, residuals=None):
        super().__init__(message)
        self.step = step
        self.residuals = list(residuals or [])


class ConfigError(ViscoEMCError, ValueError):
    """Raised when a configuration fails validation. ``errors`` lists every problem found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class MeshError(ViscoEMCError, ValueError):
    """Raised for malformed meshes or unknown surface sets."""
