"""Exception and warning classes used across the package."""


class ClicktimeError(Exception):
    """Base class for all package errors."""


class GridMismatchError(ClicktimeError, ValueError):
    """Two objects live on different energy grids."""


class DomainError(ClicktimeError, ValueError):
    """An input lies outside the domain where an operation is defined."""


class NumericalFailure(ClicktimeError, RuntimeError):
    """A numerical procedure did not reach its accuracy or stability target."""


class ConfigError(ClicktimeError, ValueError):
    """A run configuration failed validation.

    ``key`` is the dotted path of the offending entry, e.g. ``potential.kind``.
    """

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class AccuracyWarning(UserWarning):
    """A result was produced but a diagnostic exceeded its comfort threshold."""
