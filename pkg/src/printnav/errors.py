"""Exception types shared across the package."""


class PrintnavError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatchError(PrintnavError, ValueError):
    """Operands live in different dimensions."""


class UndecidedError(PrintnavError, RuntimeError):
    """The LP kernel ran out of pivots before reaching a verdict."""


class UnboundedRegionError(PrintnavError, ValueError):
    """A polytope is unbounded along a named coordinate."""


class EmptyRegionError(PrintnavError, ValueError):
    """An operation that needs a nonempty polytope got an empty one."""


class MapFormatError(PrintnavError, ValueError):
    """A map, schedule, or scenario file does not match its schema."""


class SingularFitError(PrintnavError, ValueError):
    """Calibration data cannot support a line fit (all speeds equal)."""


class NonInvertibleModelError(PrintnavError, ValueError):
    """Quality-speed model has non-positive slope; no speed inversion."""


class ToleranceUnachievableError(PrintnavError, ValueError):
    """Requested quality tolerance is below the model intercept."""


class GcodeParseError(PrintnavError, ValueError):
    """Malformed G-code input; carries the 1-based line number."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ScheduleError(PrintnavError, ValueError):
    """A speed schedule cannot be built or is inconsistent."""


class InfeasiblePlanError(PrintnavError, RuntimeError):
    """The controller could not find any admissible plan.

    Carries diagnostics describing the failing step.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SimulationAbortedError(PrintnavError, RuntimeError):
    """Closed-loop run aborted; ``partial`` holds the result so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
