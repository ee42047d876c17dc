"""Exception types raised across the package."""


class MemheatError(Exception):
    """Base class for all package errors."""


class KernelError(MemheatError, ValueError):
    """An invalid or unsupported memory kernel."""


class QuadratureError(MemheatError, ValueError):
    """A quadrature rule that cannot meet its contract."""


class NonlinearityError(MemheatError, ValueError):
    """A nonlinearity violating phi(0) = 0 or the growth restriction."""


class GridMismatchError(MemheatError, ValueError):
    """Two history fields living on different s-grids or mode counts."""


class BlowUpError(MemheatError, RuntimeError):
    """The time stepper produced nonfinite or runaway values.

    Attributes
    ----------
    time : float
        Time level at which the detector fired.
    state : object
        Last finite state before the failure (a ``StateZ``), or None.
    """

    def __init__(self, message, time, state=None):
        super().__init__(message)
        self.time = time
        self.state = state


class SandwichViolation(MemheatError, AssertionError):
    """The two-sided bound on the energy functional failed.

    Carries the offending ``lower <= value <= upper`` triple as a witness.
    """

    def __init__(self, message, lower, value, upper):
        super().__init__(message)
        self.lower = lower
        self.value = value
        self.upper = upper


class ConfigError(MemheatError, ValueError):
    """A scenario configuration that cannot be parsed or resolved."""

    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f" (line {line}, column {column if column is not None else 1})"
        super().__init__(message + where)
        self.line = line
        self.column = column


class HistoryExtensionWarning(UserWarning):
    """Past samples did not reach the last s-node; the tail was extended."""
