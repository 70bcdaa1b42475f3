"""Shared exception types."""


class SgdelfError(Exception):
    """Base class for errors raised by this package."""


class DataError(SgdelfError):
    """Malformed or inconsistent rating data."""


class ConfigError(SgdelfError):
    """Invalid configuration file or experiment description."""


class DivergenceError(SgdelfError):
    """Training or refinement produced non-finite values."""
