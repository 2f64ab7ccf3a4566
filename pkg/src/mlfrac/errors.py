"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MLFracError(Exception):
    """Base class for all package errors."""


class DomainError(MLFracError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class QuadratureError(MLFracError):
    """A quadrature could not reach the requested tolerance."""


class QuadratureBudgetExceeded(QuadratureError):
    pass


class ValidationFailure(MLFracError):
    """A matrix symbol failed a structural check.

    The offending report is attached as ``report``.
    """

    def __init__(self, message: str, report=None) -> None:
        super().__init__(message)
        self.report = report


class NotHermitian(MLFracError, ValueError):
    pass


class ConvergenceFailure(MLFracError):
    pass


class GridMismatch(MLFracError, ValueError):
    pass


class NoConvergence(MLFracError):
    """Picard iteration hit its cap; the partial report is attached."""

    def __init__(self, message: str, report=None, fields=None) -> None:
        super().__init__(message)
        self.report = report
        self.fields = fields


class SingularSystem(MLFracError):
    pass


class InsufficientSamples(MLFracError, ValueError):
    pass


class ConfigError(MLFracError, ValueError):
    pass


class LipschitzViolationWarning(UserWarning):
    """Runtime sampling found the declared Lipschitz constant exceeded."""
