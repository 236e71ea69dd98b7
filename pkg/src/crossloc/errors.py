"""Exception types shared across the package."""


class CrossLocError(Exception):
    """Base class for errors raised by this package."""


class FormatError(CrossLocError):
    """A file does not conform to its declared on-disk format."""


class ConfigError(CrossLocError):
    """Unknown or ill-typed configuration key/value."""
