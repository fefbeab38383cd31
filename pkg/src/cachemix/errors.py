"""Exception hierarchy shared across the package."""


class CachemixError(Exception):
    """Base class for all library-specific errors."""


class InvalidParameterError(CachemixError, ValueError):
    """An argument violates a documented precondition."""


class TooLargeError(CachemixError):
    """An exact computation was refused because it exceeds a size cap."""


class NoConvergenceError(CachemixError):
    """An iterative solver stopped before reaching its tolerance.

    The final residual is carried so callers can decide whether the
    partial answer is still usable.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class TraceIOError(CachemixError, OSError):
    """A trace file could not be read."""


class TraceParseError(CachemixError, ValueError):
    """A trace file row is malformed; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class InvalidPathsError(CachemixError):
    """A canonical-path family does not connect every ordered state pair."""
