"""Exception taxonomy: configuration vs usage vs data problems."""


class DFNetError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DFNetError):
    """A configuration value is structurally invalid (bad shape, bad hyperparameter)."""


class UsageError(DFNetError):
    """An operation was called in a way its contract forbids."""


class DataError(DFNetError):
    """Input data violates its declared domain (out-of-range labels, non-finite values)."""


class TrainingDiverged(DFNetError):
    """The training loss became non-finite."""
