"""Input validation helpers shared across the package."""

import numpy as np


class ValidationError(ValueError):
    """Raised when user-supplied data or configuration is malformed."""


class TrainingError(RuntimeError):
    """Raised when an optimisation run produces non-finite values."""


def check_matrix(a, name="X", n_cols=None, allow_empty=False):
    """Return ``a`` as a finite, C-contiguous float64 matrix.

    One row per sample. NaN and infinite entries are rejected.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if n_cols == 1 else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise ValidationError(
            f"{name} has {arr.shape[1]} columns, expected {n_cols}"
        )
    if arr.shape[0] == 0 and not allow_empty:
        raise ValidationError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or infinite values")
    return np.ascontiguousarray(arr)


def check_positive(value, name):
    if not value > 0:
        raise ValidationError(f"{name} must be > 0, got {value!r}")
    return value


def check_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise ValidationError(
            f"{type(estimator).__name__} is not fitted yet; call fit first"
        )
