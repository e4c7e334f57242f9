from typing import Optional


class GapTVError(Exception):
    """Base class for every error raised by the gaptv package"""
    pass


class InvalidArgumentError(GapTVError, ValueError):
    """Raised when an input violates a documented precondition"""
    pass


class DomainError(InvalidArgumentError):
    """Raised when a special function is evaluated outside its domain"""
    pass


class DegenerateDistributionError(DomainError):
    """Raised when the binomial reference distribution collapses (p in {0, 1})"""
    pass


class SelectionError(GapTVError):
    """Raised when no candidate grid size has a finite gap score.

    The full scan is attached as ``scan`` for diagnostics.
    """

    def __init__(self, message: str, scan=None):
        super().__init__(message)
        self.scan = scan


class SolverError(GapTVError):
    """Raised on internal numerical failure inside a solver"""
    pass


class GenerationError(GapTVError):
    """Raised when a synthetic plateau world cannot be generated"""
    pass


class DataError(InvalidArgumentError):
    """Raised for malformed input files; records where the problem was found"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[str] = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if column is not None:
            location.append(f"column '{column}'")
        full = f"{message} ({', '.join(location)})" if location else message
        super().__init__(full)
        self.line = line
        self.column = column


class ModelFormatError(DataError):
    """Raised when a model document is malformed or has an unknown version"""
    pass
