"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: validation failures -> 1, I/O failures
(plain OSError) -> 2, numeric failures -> 3.
"""

from __future__ import annotations

__all__ = [
    "SummarankError",
    "ValidationError",
    "DatasetFormatError",
    "PoolError",
    "NumericError",
]


class SummarankError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SummarankError):
    """Contract violation in inputs, configs, or file contents."""


class DatasetFormatError(ValidationError):
    """Malformed dataset record; message carries the 1-based line number."""


class PoolError(ValidationError):
    """Candidate pool is empty or too small for the requested operation."""


class NumericError(SummarankError):
    """A non-finite value (NaN/inf) surfaced where numbers must be finite."""
