"""Interpretability and training-dynamics instrumentation.

Everything here reads completed reports, stores, or trajectory logs and
produces plain tables (or small dataclasses) ready for external plotting;
nothing mutates pipeline state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import check_unit_interval
from .errors import DataError
from .kernels import SparkerModel, sphere_of_influence_radius
from .pipeline import TestReport
from .training import TrajectoryLog

__all__ = [
    "ScoreHistogram",
    "AnomalousSelection",
    "score_histogram",
    "select_anomalous",
    "moran_spacing",
    "moran_series",
    "sphere_occupancy",
    "empirical_cdf",
    "exponential_cdf",
    "export_histogram",
    "export_activations",
    "export_trajectory",
    "export_moran_series",
]

MIN_NULL_TOYS = 20


@dataclass
class ScoreHistogram:
    """Observed anomaly-score histogram with an anomaly-free band."""

    bin_edges: np.ndarray  # (n_bins + 1,)
    observed_counts: np.ndarray  # (n_bins,) integers
    null_mean: np.ndarray  # (n_bins,)
    null_std: np.ndarray  # (n_bins,)


def score_histogram(report: TestReport, null_score_sets,
                    n_bins: int = 20) -> ScoreHistogram:
    """Histogram of the data anomaly scores against the null band.

    The band is the per-bin mean +- standard deviation of the score
    histograms of anomaly-free calibration toys (at least 20).
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if null_score_sets is None or len(null_score_sets) < MIN_NULL_TOYS:
        raise DataError(
            f"need at least {MIN_NULL_TOYS} anomaly-free score sets for the "
            "null band (calibrate with score collection enabled)"
        )
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    observed, _ = np.histogram(report.scores_data, bins=edges)
    null_counts = np.stack([
        np.histogram(np.asarray(s), bins=edges)[0] for s in null_score_sets
    ])
    return ScoreHistogram(
        bin_edges=edges,
        observed_counts=observed,
        null_mean=null_counts.mean(axis=0),
        null_std=null_counts.std(axis=0, ddof=1),
    )


@dataclass
class AnomalousSelection:
    indices: np.ndarray  # indices into the inspected dataset
    scores: np.ndarray
    activations: np.ndarray  # (n_selected, n_kernels)


def select_anomalous(report: TestReport, threshold: float) -> AnomalousSelection:
    """Inspected points with anomaly score at or above the threshold."""
    threshold = check_unit_interval(threshold, "threshold")
    idx = np.flatnonzero(report.scores_data >= threshold)
    return AnomalousSelection(
        indices=idx,
        scores=report.scores_data[idx],
        activations=report.activations_data[idx],
    )


# ---------------------------------------------------------------------------
# Moran spacing


def exponential_cdf(scale: float = 1.0):
    """CDF of the unit-scale exponential toy reference (zero below support)."""
    def cdf(x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(x > 0, 1.0 - np.exp(-x / scale), 0.0)
    return cdf


def empirical_cdf(sample):
    """Rank-based CDF of a reference sample, mapping into (0, 1)."""
    values = np.sort(np.asarray(sample, dtype=np.float64).reshape(-1))
    n = values.size
    if n < 1:
        raise DataError("empty reference sample")

    def cdf(x):
        ranks = np.searchsorted(values, np.asarray(x, dtype=np.float64),
                                side="right")
        return ranks / (n + 1)

    return cdf


def moran_spacing(locations, reference_cdf) -> float:
    """Spacing statistic of 1-d kernel locations under a reference CDF.

    Locations are mapped through the CDF, sorted, and extended with the
    boundary values 0 and 1; the statistic is ``-sum(log((M+1) * D_i))``
    over the M+1 spacings.  It vanishes only for exactly uniform spacings
    and returns ``inf`` when two locations coincide.
    """
    locs = np.asarray(locations, dtype=np.float64)
    if locs.ndim == 2:
        if locs.shape[1] != 1:
            raise ValueError("Moran spacing is defined for 1-d locations")
        locs = locs[:, 0]
    if locs.size < 2:
        raise ValueError("need at least two locations")
    u = np.sort(np.asarray(reference_cdf(locs), dtype=np.float64))
    if np.any(u < 0) or np.any(u > 1):
        raise ValueError("reference CDF must map into [0, 1]")
    spacings = np.diff(np.concatenate([[0.0], u, [1.0]]))
    if np.any(spacings == 0.0):
        return math.inf
    m1 = spacings.size  # M + 1
    return float(-np.sum(np.log(m1 * spacings)))


def moran_series(trajectory: TrajectoryLog, reference_cdf) -> np.ndarray:
    """Moran spacing statistic at every trajectory snapshot."""
    return np.array([
        moran_spacing(trajectory.locations[i], reference_cdf)
        for i in range(trajectory.steps.size)
    ])


# ---------------------------------------------------------------------------
# sphere-of-influence occupancy


def sphere_occupancy(model: SparkerModel, points, alpha: float) -> np.ndarray:
    """Number of points inside each kernel's influence ball."""
    alpha = check_unit_interval(alpha, "alpha")
    pts = points.points if hasattr(points, "points") else np.asarray(points)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    radius = sphere_of_influence_radius(model.width, alpha)
    d = cdist(pts, model.locations)
    return (d <= radius).sum(axis=0)


# ---------------------------------------------------------------------------
# delimiter-separated exports


def _write_table(path, columns, rows, config_hash: str, units: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# config_hash: {config_hash}\n")
        fh.write(f"# units: {units}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def export_histogram(hist: ScoreHistogram, path, config_hash: str) -> None:
    rows = [
        (hist.bin_edges[i], hist.bin_edges[i + 1], hist.observed_counts[i],
         hist.null_mean[i], hist.null_std[i])
        for i in range(hist.observed_counts.size)
    ]
    _write_table(
        path,
        ["bin_low", "bin_high", "observed_count", "null_mean", "null_std"],
        rows, config_hash,
        "anomaly score in (0,1); counts per bin",
    )


def export_activations(selection: AnomalousSelection, path,
                       config_hash: str) -> None:
    n_kernels = selection.activations.shape[1] if selection.activations.size else 0
    cols = ["point_index", "score"] + [f"component_{i}" for i in range(n_kernels)]
    rows = [
        [selection.indices[i], selection.scores[i], *selection.activations[i]]
        for i in range(selection.indices.size)
    ]
    _write_table(path, cols, rows, config_hash,
                 "per-kernel log-ratio contributions (dimensionless)")


def export_trajectory(traj: TrajectoryLog, path, config_hash: str) -> None:
    """Long-format table: one row per (step, kernel, coordinate)."""
    rows = []
    n_snap, n_kernels, dim = traj.locations.shape
    for s in range(n_snap):
        for i in range(n_kernels):
            for j in range(dim):
                rows.append((traj.steps[s], traj.widths[s], i,
                             "location", j, traj.locations[s, i, j]))
            rows.append((traj.steps[s], traj.widths[s], i,
                         "amplitude", 0, traj.amplitudes[s, i]))
    _write_table(
        path,
        ["step", "width", "kernel", "kind", "coordinate", "value"],
        rows, config_hash,
        "feature-space units for locations; dimensionless amplitudes",
    )


def export_moran_series(trajectory: TrajectoryLog, values, path,
                        config_hash: str) -> None:
    rows = [
        (trajectory.steps[i], trajectory.widths[i], values[i])
        for i in range(trajectory.steps.size)
    ]
    _write_table(path, ["step", "width", "moran_statistic"], rows,
                 config_hash, "spacing statistic (dimensionless)")
