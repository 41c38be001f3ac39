"""Exception hierarchy.

Numeric failures (``NumericError`` subclasses) map to CLI exit status 3,
degenerate observables to 4 and configuration problems to 2.
"""


class CltLabError(Exception):
    """Base class for all errors raised by cltlab."""


class ConfigError(CltLabError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DomainError(CltLabError, ValueError):
    """A phase point lies outside the system's phase space."""


class UnsupportedSystemError(CltLabError):
    """The system lacks a capability (sampler, inverse branches, ...)."""


class ClassMismatchError(CltLabError, ValueError):
    """Regularity budgets with incompatible class tags were combined."""


class InvalidGeometryError(CltLabError, ValueError):
    """Scatterers overlap or have invalid radii/centres."""


class NumericError(CltLabError):
    """Base for failures of a numerical procedure."""


class HorizonCapError(NumericError):
    """A free flight exceeded the configured free-path cap."""


class SingularCollisionError(NumericError):
    """A tangential (or near-tangential) collision was met."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InsufficientDataError(NumericError):
    pass


class ConvergenceError(NumericError):
    pass


class InconsistentSeriesError(NumericError):
    pass


class DegenerateObservableError(CltLabError):
    """The observable has (numerically) vanishing variance."""
