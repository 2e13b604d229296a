__all__ = (
    "RangingError",
    "DimensionError",
    "NotHermitianError",
    "ConvergenceError",
    "EstimationError",
    "NoDataError",
    "CaptureFormatError",
    "BankFormatError",
    "UnrecoverableGapError",
)


class RangingError(Exception):
    """Base class for all errors raised by phase_ranging."""


class DimensionError(RangingError, ValueError):
    """Raised when an array has a shape or index range the operation cannot accept."""


class NotHermitianError(RangingError, ValueError):
    """Raised when a matrix that must be Hermitian is not."""


class ConvergenceError(RangingError, ArithmeticError):
    """Raised when an iterative solver exhausts its iteration cap."""


class EstimationError(RangingError):
    """Raised when a range estimate cannot be produced."""


class NoDataError(EstimationError):
    """Raised when there are no available tones to estimate from."""


class CaptureFormatError(RangingError, ValueError):
    """Raised when an IQ-capture file cannot be parsed."""

    def __init__(self, message: str, line_no: int | None = None) -> None:
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class BankFormatError(RangingError, ValueError):
    """Raised when a model-bank file is malformed."""


class UnrecoverableGapError(RangingError):
    """Raised when a tone gap is wider than the widest network in the bank."""
