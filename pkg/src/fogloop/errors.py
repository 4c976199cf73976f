"""Exception hierarchy shared across the package."""


class FogloopError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(FogloopError):
    """A scenario or configuration could not be interpreted."""
