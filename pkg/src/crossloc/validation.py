"""Input validation helpers shared by the estimators and the pipeline."""

from __future__ import annotations

import numpy as np


def as_float_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array with finite entries."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_locations(y, n_expected: int | None = None, name: str = "locations") -> np.ndarray:
    """Coerce to an (n, 2) float64 array of planar positions."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"{name} must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if n_expected is not None and arr.shape[0] != n_expected:
        raise ValueError(
            f"{name} has {arr.shape[0]} rows, expected {n_expected}"
        )
    return arr


def as_vector(v, dim: int | None = None, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float64 vector, optionally of a fixed dimension."""
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_finite_scalar(x, name: str = "value") -> float:
    val = float(x)
    if not np.isfinite(val):
        raise ValueError(f"{name} must be finite, got {val}")
    return val
