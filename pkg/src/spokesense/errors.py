"""Exception types shared across the package."""

from __future__ import annotations


class SpokesenseError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SpokesenseError, ValueError):
    """An input violates a documented precondition."""


class EmptyInputError(ValidationError):
    """An input is empty, or too short for the requested operation."""


class DegenerateInputError(ValidationError):
    """An input is degenerate for the requested statistic (e.g. zero variance)."""


class LayoutMismatchError(ValidationError):
    """A feature vector's layout does not match the consumer's expectation."""


class NotPositiveDefiniteError(SpokesenseError):
    """A matrix required to be positive definite is not.

    ``minor_index`` is the 1-based order of the leading principal minor at
    which the Cholesky factorization failed.
    """

    def __init__(self, minor_index: int, message: str | None = None):
        self.minor_index = int(minor_index)
        if message is None:
            message = (
                "matrix is not positive definite: leading principal minor "
                f"{self.minor_index} is not positive"
            )
        super().__init__(message)


class FormatError(SpokesenseError):
    """An on-disk document is malformed.

    ``line`` (1-based) and ``field`` locate the offending cell when known.
    """

    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        parts = [message]
        if line is not None:
            parts.append(f"line {line}")
        if field is not None:
            parts.append(f"field {field!r}")
        super().__init__(": ".join(parts) if len(parts) == 1 else f"{parts[0]} ({', '.join(parts[1:])})")


class UnsupportedVersionError(FormatError):
    """A document declares a version this reader does not support."""
