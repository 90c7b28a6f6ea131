"""Exception types shared across the package."""


class IndexDomainError(IndexError, ValueError):
    """An index lies outside the domain of a sequence or estimator."""


class ConfigError(ValueError):
    """A configuration value or tag is invalid."""


class DataError(ValueError):
    """Input data cannot be processed (e.g. non-positive risks for a log fit)."""
