"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SpectraError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(SpectraError, ValueError):
    """Input data violates a type invariant (bad eigenvalue, bad weight, ...)."""


class DomainError(SpectraError, ValueError):
    """A function was evaluated outside its domain (pole, inside the support, ...)."""


class PreconditionError(SpectraError, ValueError):
    """An operation was called on an object that does not satisfy its precondition."""


class ClassificationError(SpectraError, ValueError):
    """A spike could not be attached to any bulk component."""


class ConvergenceError(SpectraError, ArithmeticError):
    """An iterative solver did not converge."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class StructureError(SpectraError, ArithmeticError):
    """The critical points of f do not alternate with its poles as a valid bulk structure requires."""


class QuantileError(SpectraError, IndexError):
    """A requested classical location lies beyond the available spectral mass."""
