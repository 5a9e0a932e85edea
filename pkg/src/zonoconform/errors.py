"""Exceptions raised by zonoconform.

All of them derive from ValueError so callers that only care about bad input
can keep catching ValueError.
"""


class ZonoconformError(ValueError):
    """Base class for every error raised by the package."""


class DomainError(ZonoconformError):
    """An argument is outside its domain (alpha, eps, shapes, empty data)."""


class DegeneracyError(ZonoconformError):
    """The input is lower dimensional than required (flat data, rank-deficient generators)."""


class UnsupportedDimensionError(ZonoconformError):
    """The requested computation is not supported in this dimension."""


class SingularCovarianceError(ZonoconformError):
    """A sample covariance is too badly conditioned to invert."""


class InfeasibleProgramError(ZonoconformError):
    """A linear program was infeasible or the solver failed."""


class DegenerateErrorsError(ZonoconformError):
    """The error matrix is identically zero, so no SVD basis exists."""
