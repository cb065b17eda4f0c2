"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes, so every error raised by
library code should be (a subclass of) one of the classes below.
"""


class AbexRatError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 2


class DataError(AbexRatError):
    """Malformed files, inconsistent shapes/labels, bad configuration."""

    exit_code = 2


class DimensionError(DataError):
    """Invalid or mismatched array dimensions."""


class ConfigError(DataError):
    """Invalid configuration value or unknown configuration key."""


class ProviderError(AbexRatError):
    """A remote text-generation or embedding provider failed."""

    exit_code = 3


class NumericError(AbexRatError):
    """Non-finite values where finite arithmetic is required."""

    exit_code = 4
