"""Shared exception types for the bcscast package."""


class BcscastError(Exception):
    """Base class for all package errors."""


class DimensionError(BcscastError):
    """Frame or block geometry is inconsistent."""


class TruncatedInputError(BcscastError):
    """An input file ended before the declared payload."""


class ConfigError(BcscastError):
    """A configuration value is out of its allowed range."""


class BudgetError(BcscastError):
    """A sample budget cannot be met with the given bounds."""


class RateError(BcscastError):
    """A per-block measurement count is out of range."""


class CorruptStreamError(BcscastError):
    """A packet stream disagrees with its metadata."""


class AllocationError(BcscastError):
    """The power allocation solver failed to converge."""


class TransmissionError(BcscastError):
    """A transmission plan cannot be applied to the packet batch."""
