"""Input validation helpers for array-facing entry points.

These normalize user-supplied arrays to float64 ndarrays and raise
:class:`~summarank.errors.ValidationError` with actionable messages, so the
estimator and evaluation layers can assume well-formed inputs.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

__all__ = [
    "as_float_matrix",
    "check_feature_matrix",
    "check_binary_labels",
    "check_training_arrays",
]


def as_float_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a 2D float64 array, rejecting ragged or non-numeric input."""
    try:
        arr = np.asarray(X, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} is not numeric: {exc}") from exc
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    return arr


def check_feature_matrix(
    X, expected_dim: int | None = None, name: str = "X"
) -> np.ndarray:
    """Validated feature matrix: 2D, finite, optionally with a fixed width."""
    arr = as_float_matrix(X, name)
    if arr.shape[0] == 0:
        raise ValidationError(f"{name} holds no rows")
    if arr.shape[1] == 0:
        raise ValidationError(f"{name} holds no features")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise ValidationError(f"{name} row {bad} contains non-finite values")
    if expected_dim is not None and arr.shape[1] != expected_dim:
        raise ValidationError(
            f"{name} has {arr.shape[1]} features, expected {expected_dim}"
        )
    return arr


def check_binary_labels(Y, name: str = "Y") -> np.ndarray:
    """Validated multi-task label matrix: 2D with entries in {0, 1}."""
    arr = as_float_matrix(Y, name)
    if arr.shape[1] == 0:
        raise ValidationError(f"{name} holds no tasks")
    if not np.isin(arr, (0.0, 1.0)).all():
        raise ValidationError(f"{name} must contain only 0/1 labels")
    return arr


def check_training_arrays(X, Y) -> tuple[np.ndarray, np.ndarray]:
    """Jointly validated (features, labels) pair with matching row counts."""
    X = check_feature_matrix(X)
    Y = check_binary_labels(Y)
    if X.shape[0] != Y.shape[0]:
        raise ValidationError(
            f"X and Y disagree on the number of rows: {X.shape[0]} vs {Y.shape[0]}"
        )
    return X, Y
