"""Input validation helpers used throughout the package."""

from __future__ import annotations

import numpy as np


def as_point(x, name: str = "x") -> np.ndarray:
    """Coerce to a finite 1-d float64 vector."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError(f"{name} must have at least one coordinate")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_points(X, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-d (n_points, dim) float64 array."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-d (n_points, dim), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def check_dim(d_got: int, d_expected: int, name: str = "x") -> None:
    if d_got != d_expected:
        raise ValueError(
            f"dimension mismatch: {name} has dim {d_got}, expected {d_expected}"
        )


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not value > 0 or not np.isfinite(value):
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def check_unit_interval(value: float, name: str, open_ends: bool = True) -> float:
    value = float(value)
    ok = 0.0 < value < 1.0 if open_ends else 0.0 <= value <= 1.0
    if not ok:
        bounds = "(0, 1)" if open_ends else "[0, 1]"
        raise ValueError(f"{name} must lie in {bounds}, got {value}")
    return value
