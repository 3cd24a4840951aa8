"""
Custom exceptions for the GNN geolocation pipeline.

Defines specific exception types for different error conditions
to enable proper error handling, logging and stable CLI exit codes.
"""

from typing import Optional, Dict, Any


class GeoException(Exception):
    """Base exception for all geolocation pipeline errors."""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)


# Data errors (exit code 1)

class DataError(GeoException):
    """Base exception for malformed or inconsistent input data."""
    exit_code = 1


class ParseError(DataError):
    """Raised when a measurement file line cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, details: Optional[Dict[str, Any]] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, details)


class RecordValidationError(DataError):
    """Raised when a parsed record violates a structural invariant (e.g. ttl gap)."""

    def __init__(self, message: str, line: Optional[int] = None, details: Optional[Dict[str, Any]] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, details)


class RangeError(DataError):
    """Raised when a coordinate lies outside its valid or declared range."""

    def __init__(self, message: str, row: Optional[int] = None, details: Optional[Dict[str, Any]] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message, details)


class DuplicateError(DataError):
    """Raised when an ip appears twice where it must be unique."""
    pass


class MissingDestinationError(DataError):
    """Raised when a landmark or target ip is never observed in any routing path."""
    pass


class UnknownNodeError(DataError):
    """Raised when a requested node id or ip is not part of the graph."""
    pass


class LengthMismatchError(DataError):
    """Raised when paired inputs have different lengths or keys."""
    pass


class InsufficientDataError(DataError):
    """Raised when there is too little data for an operation (e.g. splitting < 10 landmarks)."""
    pass


# Usage errors (exit code 2)

class UsageError(GeoException):
    """Base exception for invalid invocations and configuration."""
    exit_code = 2


class ConfigurationError(UsageError):
    """Raised when there are configuration issues."""
    pass


class UnknownMethodError(UsageError):
    """Raised when an unknown aggregator, decoder or baseline method is requested."""
    pass


# Numerical errors (exit code 3)

class NumericalError(GeoException):
    """Base exception for numerical failures in the tensor core and training."""
    exit_code = 3


class DimensionError(NumericalError):
    """Raised when tensor shapes do not conform."""
    pass


class BatchSizeError(NumericalError):
    """Raised when train-mode batch normalization receives fewer than two rows."""
    pass


class ContractError(NumericalError):
    """Raised when a tape or tensor contract is violated (e.g. non-scalar backward root)."""
    pass


class NonFiniteError(NumericalError):
    """Raised when a tensor would hold NaN or infinite values."""
    pass


class DivergenceError(NumericalError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, message: str, epoch: Optional[int] = None, details: Optional[Dict[str, Any]] = None):
        self.epoch = epoch
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message, details)


def exit_code_for(e: BaseException) -> int:
    """Map an exception to the CLI exit-code contract (1 data, 2 usage, 3 numerical)."""
    if isinstance(e, GeoException):
        return e.exit_code
    if isinstance(e, (FileNotFoundError, IsADirectoryError)):
        return 1
    if isinstance(e, PermissionError) or isinstance(e, OSError):
        return 2
    return 1
