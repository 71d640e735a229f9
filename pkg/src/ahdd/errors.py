"""Exception types raised across the package."""


class AhddError(Exception):
    """Base class for all package errors."""


class FormatError(AhddError, ValueError):
    """A data file violates its declared format."""


class ConfigurationError(AhddError, ValueError):
    """Invalid or inconsistent configuration."""


class DivergenceError(AhddError, RuntimeError):
    """Training produced a non-finite loss."""


class CheckpointError(AhddError, ValueError):
    """A checkpoint is malformed or does not match the supplied data."""
