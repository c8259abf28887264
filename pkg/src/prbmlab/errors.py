"""Exception types shared across the package."""


class PrbmlabError(Exception):
    """Base class for package errors."""


class ProfileError(PrbmlabError, ValueError):
    """Invalid variance-profile parameters or a violated profile invariant."""


class TruncationError(PrbmlabError, RuntimeError):
    """Wrap-sum truncation failed to meet its tail tolerance."""


class UnsupportedRegimeError(PrbmlabError, ValueError):
    """A shape/decay parameter was requested outside its alpha regime."""


class NearSingularError(PrbmlabError, ArithmeticError):
    """A Fourier denominator came within tolerance of zero."""


class ConvergenceError(PrbmlabError, RuntimeError):
    """An iterative solver failed to reach its residual target."""


class BulkViolationError(PrbmlabError, ValueError):
    """A spectral parameter lies outside the bulk domain."""


class InsufficientDataError(PrbmlabError, ValueError):
    """Not enough usable points/eigenvalues for the requested statistic."""


class ConfigError(PrbmlabError, ValueError):
    """Invalid experiment configuration."""
