"""Labeled point collections used by the losses and the training loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_points, check_positive

REFERENCE = "reference"
DATA = "data"


@dataclass
class PointSet:
    """A set of d-dimensional feature vectors with a role tag.

    Parameters
    ----------
    points : ndarray, shape (n_points, dim)
    role : str
        Either ``"reference"`` (nominal sample) or ``"data"`` (inspected
        sample).
    weight : float
        Global weight applied to every point of a reference set to balance
        unequal sample sizes.  Ignored for data sets.
    point_weights : ndarray or None
        Optional per-point weights (used by the deterministic
        infinite-statistics grids); default is one per point.
    """

    points: np.ndarray
    role: str = DATA
    weight: float = 1.0
    point_weights: np.ndarray | None = None

    def __post_init__(self):
        self.points = as_points(self.points, "points")
        if self.role not in (REFERENCE, DATA):
            raise ValueError(f"role must be '{REFERENCE}' or '{DATA}', got {self.role!r}")
        self.weight = check_positive(self.weight, "weight")
        if self.point_weights is not None:
            pw = np.asarray(self.point_weights, dtype=np.float64).reshape(-1)
            if pw.shape[0] != self.points.shape[0]:
                raise ValueError("point_weights length does not match points")
            if not np.all(np.isfinite(pw)) or np.any(pw < 0):
                raise ValueError("point_weights must be finite and non-negative")
            self.point_weights = pw

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def effective_size(self) -> float:
        """Sum of per-point weights (equals ``size`` when unweighted)."""
        if self.point_weights is None:
            return float(self.size)
        return float(self.point_weights.sum())

    def weights_vector(self) -> np.ndarray:
        if self.point_weights is None:
            return np.ones(self.size)
        return self.point_weights


def reference_set(points, weight: float = 1.0, point_weights=None) -> PointSet:
    return PointSet(points, role=REFERENCE, weight=weight, point_weights=point_weights)


def data_set(points, point_weights=None) -> PointSet:
    return PointSet(points, role=DATA, point_weights=point_weights)


def check_pair(reference: PointSet, data: PointSet) -> None:
    """Validate a (reference, data) pair for a two-sample computation."""
    if reference.role != REFERENCE:
        raise ValueError("first set must be tagged 'reference'")
    if data.role != DATA:
        raise ValueError("second set must be tagged 'data'")
    if reference.dim != data.dim:
        raise ValueError(
            f"dimension mismatch between reference ({reference.dim}) "
            f"and data ({data.dim})"
        )
