"""Small input-validation helpers used by the estimators and pipelines."""

import numpy as np

from .errors import DatasetError


def as_float_matrix(X, name="X"):
    """Coerce to a 2-D float64 array, rejecting ragged or empty input."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_float_vector(x, name="x"):
    """Coerce to a 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    return arr


def check_n_features(arr, n_features, name="X"):
    """Reject feature-dimension mismatches against a fitted model."""
    found = arr.shape[-1]
    if found != n_features:
        raise ValueError(
            f"{name} has {found} features, model was fitted with {n_features}"
        )


def check_labels_match(X, y):
    """Validate (X, y) row agreement and return y as an object array."""
    y_arr = np.asarray(y, dtype=object).ravel()
    if len(y_arr) != X.shape[0]:
        raise DatasetError(f"X has {X.shape[0]} rows but y has {len(y_arr)} labels")
    return y_arr
