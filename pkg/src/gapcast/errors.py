"""Exception hierarchy shared across the package."""


class GapcastError(Exception):
    """Base class for all errors raised by gapcast."""


class ConfigError(GapcastError, ValueError):
    """Invalid configuration value, unknown key or missing column mapping."""


class DataQualityError(GapcastError, ValueError):
    """Input data is present but too broken to use."""


class SeriesTooShortError(GapcastError, ValueError):
    def __init__(self, length: int, minimum: int, what: str = "series"):
        self.length = length
        self.minimum = minimum
        super().__init__(f"{what} has length {length}; at least {minimum} required")


class DomainError(GapcastError, ValueError):
    """A value lies outside the domain an operation accepts."""


class ShapeError(GapcastError, ValueError):
    pass


class NumericError(GapcastError, FloatingPointError):
    pass


class CheckpointError(GapcastError):
    pass
