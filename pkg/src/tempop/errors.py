"""Exception types shared by every module.

The command-line front end maps :class:`DomainError` to exit status 2 and
:class:`NumericalError` to exit status 3.
"""


class TempOpError(Exception):
    """Base class for all errors raised by :mod:`tempop`."""


class DomainError(TempOpError, ValueError):
    """An input lies outside the domain of the requested operation."""


class SpectrumFormatError(DomainError):
    """A spectrum document is malformed; carries a line/column diagnostic."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class EnumerationLimitError(DomainError):
    """Brute-force enumeration would exceed the configured microstate budget."""


class NumericalError(TempOpError, ArithmeticError):
    """A numerical procedure failed (overflow guard, non-convergence)."""


class ConvergenceError(NumericalError):
    """An iterative solver or quadrature did not reach its tolerance."""


class TruncationError(DomainError):
    """A truncated series was asked to stop before its tail bound is met."""
