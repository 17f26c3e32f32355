"""Exception hierarchy. Every error carries the pipeline stage it came from when raised there."""


class MomentError(Exception):
    """Base class for all errors raised by momentctl."""

    stage: str | None = None


class ParseError(MomentError, ValueError):
    pass


class DescriptorError(MomentError, ValueError):
    pass


class MissingCoordinateError(MomentError, KeyError):
    def __init__(self, variable: int):
        super().__init__(variable)
        self.variable = variable

    def __str__(self) -> str:
        return f"point has no coordinate for x{self.variable}"


class DegreeExceededError(MomentError):
    """A moment beyond the tabulated degree was requested; lower the truncation order."""

    def __init__(self, requested: int, available: int):
        super().__init__(f"moment of degree {requested} requested, only degree <= {available} available")
        self.requested = requested
        self.available = available


class MissingMomentError(MomentError):
    pass


class NotFlatError(MomentError):
    pass


class IllConditionedError(MomentError):
    pass


class NotSubsetError(MomentError, ValueError):
    pass


class MissingSubsetError(MomentError, KeyError):
    pass


class ExactnessViolation(MomentError):
    def __init__(self, message: str, pair=None, discrepancy: float | None = None):
        super().__init__(message)
        self.pair = pair
        self.discrepancy = discrepancy


class BaseNotCoveredError(MomentError):
    pass


class ScheduleIncompleteError(MomentError):
    pass


class InvalidMomentError(MomentError, ValueError):
    pass
