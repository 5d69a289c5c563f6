"""Exception types shared across the package."""


class PKSNSError(Exception):
    """Base class for all package errors."""


class BlowUpDataError(PKSNSError, ValueError):
    """A field holds NaN or Inf where finite data is required."""


class SolverError(PKSNSError, RuntimeError):
    """A collocation system could not be solved."""


class ConfigError(PKSNSError, ValueError):
    """Invalid configuration or initial-data request."""


class UsageError(PKSNSError, ValueError):
    """An API was called in a way that violates its contract."""


class BracketError(PKSNSError):
    """Bisection endpoints do not carry opposite classifications."""

    def __init__(self, message, summaries=None):
        super().__init__(message)
        self.summaries = summaries or []
