"""Exception hierarchy shared by every package."""


class SaplingError(Exception):
    """Base class for all errors raised by the engine."""


class ConfigError(SaplingError, ValueError):
    """Invalid configuration or argument values."""


class DataError(SaplingError, ValueError):
    """Input data is missing, malformed or inconsistent."""


class ComputationError(SaplingError, RuntimeError):
    """A computation could not be carried out."""


class SingularSaplingError(ComputationError):
    """The Gini variation is undefined: a degree is 0 or equal to the layer size."""
