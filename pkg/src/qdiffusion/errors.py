"""Exception types shared across the package.

Most derive from ValueError so callers can catch them generically;
the solver aborts derive from RuntimeError and carry diagnostics.
"""


class DomainError(ValueError):
    """A scalar argument is outside its mathematical domain."""


class ResolutionError(ValueError):
    """A requested feature cannot be represented on the given grid."""


class GridMismatchError(ValueError):
    """Arrays built on different grids were combined."""


class SpectralFactorizationError(ValueError):
    """The correlation kernel has a negative spectrum on this grid."""


class NormalizationError(ValueError):
    """An input that must be a normalized state/density is not."""


class NotAvailableError(KeyError):
    """The requested table cell is not populated."""


class InsufficientDataError(ValueError):
    """Too few points (or too narrow a span) for a meaningful fit."""


class ConfigError(ValueError):
    """Configuration text is malformed or violates a constraint."""


class StabilityError(RuntimeError):
    """Numerical evolution left its validity envelope.

    Carries the step index (and optionally the trajectory id) at which
    the problem was detected.
    """

    def __init__(self, message, step=None, trajectory=None):
        super().__init__(message)
        self.step = step
        self.trajectory = trajectory


class WrapAroundError(StabilityError):
    """The packet grew too wide for the periodic box.

    ``series`` holds the moments recorded before the guard fired, so
    callers can still use the uncontaminated part of the run.
    """

    def __init__(self, message, step=None, trajectory=None, series=None):
        super().__init__(message, step=step, trajectory=trajectory)
        self.series = series
