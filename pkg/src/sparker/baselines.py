"""Comparison methods: fixed-center kernel test, fused Nystrom MMD,
Mahalanobis distance, and the Gaussian Frechet distance.

The fixed-center test trains amplitudes of a plain kernel expansion (no
competition, no annealing, centers frozen) under the same likelihood-ratio
objective, one training per bandwidth, combining per-bandwidth p-values by
their minimum.  It isolates the effect of trainable locations and
competition relative to the main model.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import sqrtm
from scipy.spatial.distance import cdist, pdist

from ._validation import check_positive, check_unit_interval
from .errors import ConfigError, DataError, ProvenanceMismatchError, TrainingDivergedError
from .kernels import SparkerModel
from .losses import np_loss, test_statistic
from .points import PointSet, check_pair, reference_set
from .training import AnnealingSchedule, TrainConfig, _sample_locations, train

__all__ = [
    "FixedCenterConfig",
    "FixedCenterModel",
    "FixedCenterStore",
    "FixedCenterReport",
    "calibrate_fixed_center",
    "fixed_center_np_test",
    "train_fixed_center",
    "median_heuristic_bandwidths",
    "MmdConfig",
    "MmdResult",
    "mmd_fuse_test",
    "nystrom_features",
    "mahalanobis_test",
    "frechet_distance",
    "frechet_distance_gaussians",
]

DEFAULT_BANDWIDTH_FACTORS = (0.25, 0.5, 1.0, 2.0, 4.0)


def _points_of(obj) -> np.ndarray:
    pts = obj.points if isinstance(obj, PointSet) else np.asarray(obj, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    return pts


def median_heuristic_bandwidths(points, rng=None, factors=DEFAULT_BANDWIDTH_FACTORS,
                                subsample: int = 2000) -> np.ndarray:
    """Median pairwise distance scaled by a factor grid."""
    pts = _points_of(points)
    rng = np.random.default_rng(rng)
    if pts.shape[0] > subsample:
        pts = pts[rng.choice(pts.shape[0], subsample, replace=False)]
    med = float(np.median(pdist(pts)))
    if med <= 0:
        raise DataError("median pairwise distance is zero")
    return np.array([med * f for f in factors])


# ---------------------------------------------------------------------------
# fixed-center kernel test


@dataclass
class FixedCenterModel:
    """Plain kernel expansion with frozen centers."""

    centers: np.ndarray
    amplitudes: np.ndarray
    width: float

    def to_sparker(self, clip_bound=np.inf) -> SparkerModel:
        return SparkerModel(self.centers.copy(), self.amplitudes.copy(),
                            self.width, clip_bound, softmax=False)


@dataclass
class FixedCenterConfig:
    n_centers: int = 5
    bandwidths: np.ndarray | None = None  # None: median-heuristic grid
    n_steps: int = 3000
    learning_rate: float = 1e-2
    l2_coefficient: float = 0.0
    clip_bound: float = 100.0
    reference_weight: float | None = None
    rng_seed: int = 0
    n_workers: int = 1

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            l2_coefficient=self.l2_coefficient,
            clip_bound=self.clip_bound,
            loss_kind="np",
            softmax_enabled=False,
            rng_seed=self.rng_seed,
        )


def _fixed_center_hash(config: FixedCenterConfig, bandwidths) -> str:
    payload = {
        "method": "fixed-center-np",
        "n_centers": config.n_centers,
        "bandwidths": list(map(float, bandwidths)),
        "n_steps": config.n_steps,
        "learning_rate": config.learning_rate,
        "l2_coefficient": config.l2_coefficient,
        "clip_bound": None if np.isinf(config.clip_bound) else config.clip_bound,
        "combiner": "min-p",
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def train_fixed_center(reference: PointSet, data: PointSet, centers: np.ndarray,
                       width: float, config: FixedCenterConfig):
    """Amplitude-only training at one fixed bandwidth.

    Returns the trained model and its test statistic.
    """
    check_pair(reference, data)
    width = check_positive(width, "bandwidth")
    start = SparkerModel(
        locations=np.asarray(centers, dtype=np.float64),
        amplitudes=np.zeros(len(centers)),
        width=width,
        clip_bound=config.clip_bound,
        softmax=False,
    )
    schedule = AnnealingSchedule(width, width, config.n_steps, [width])
    out = train(reference, data, config.train_config(), schedule,
                initial_model=start, freeze_locations=True)
    t = test_statistic(np_loss(out.final_model, reference, data))
    model = FixedCenterModel(
        centers=start.locations.copy(),
        amplitudes=out.final_model.amplitudes.copy(),
        width=width,
    )
    return model, t


@dataclass
class FixedCenterStore:
    bandwidths: np.ndarray
    t_samples: np.ndarray  # (n_bandwidths, n_toys)
    combined_samples: np.ndarray  # -log(min-p) per toy, leave-self-out
    provenance: dict

    @property
    def n_toys(self) -> int:
        return self.t_samples.shape[1]

    def save(self, path) -> None:
        payload = {
            "format": "sparker-fixed-center-v1",
            "provenance": self.provenance,
            "bandwidths": list(map(float, self.bandwidths)),
            "t_samples": [list(map(float, r)) for r in self.t_samples],
            "combined_samples": list(map(float, self.combined_samples)),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "FixedCenterStore":
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read store {path}: {exc}") from exc
        if payload.get("format") != "sparker-fixed-center-v1":
            raise DataError(f"{path} is not a fixed-center store")
        return cls(
            bandwidths=np.asarray(payload["bandwidths"]),
            t_samples=np.asarray(payload["t_samples"]),
            combined_samples=np.asarray(payload["combined_samples"]),
            provenance=payload["provenance"],
        )


def _min_p_statistic(pvalues: np.ndarray) -> float:
    """Monotone transform of the minimum p-value (larger = more anomalous)."""
    return float(-np.log(np.min(pvalues)))


def _fixed_center_toy(source, config, bandwidths, toy_index):
    last = None
    for attempt in range(2):
        rng = np.random.default_rng([config.rng_seed, 3, toy_index, attempt])
        ref, dat = source.draw_pair(rng)
        if config.reference_weight is not None:
            ref = reference_set(ref.points, weight=config.reference_weight)
        pooled = np.vstack([ref.points, dat.points])
        centers = _sample_locations(pooled, config.n_centers, rng)
        try:
            t_vec = np.array([
                train_fixed_center(ref, dat, centers, bw, config)[1]
                for bw in bandwidths
            ])
        except TrainingDivergedError as exc:
            last = exc
            continue
        return t_vec
    raise TrainingDivergedError(last.step, f"fixed-center toy {toy_index} diverged twice")


def calibrate_fixed_center(source, n_toys: int,
                           config: FixedCenterConfig) -> FixedCenterStore:
    """Anomaly-free calibration of the fixed-center test."""
    if n_toys < 20:
        raise ConfigError("n_toys must be >= 20")
    bandwidths = config.bandwidths
    if bandwidths is None:
        ref0, dat0 = source.draw_pair(np.random.default_rng([config.rng_seed, 0]))
        bandwidths = median_heuristic_bandwidths(
            np.vstack([ref0.points, dat0.points]),
            rng=np.random.default_rng([config.rng_seed, 0]),
        )
    bandwidths = np.asarray(bandwidths, dtype=np.float64)

    def task(i):
        return _fixed_center_toy(source, config, bandwidths, i)

    if config.n_workers > 1:
        with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
            rows = list(pool.map(task, range(n_toys)))
    else:
        rows = [task(i) for i in range(n_toys)]
    t_samples = np.stack(rows, axis=1)

    n = n_toys
    combined = np.empty(n)
    for j in range(n):
        p = ((t_samples >= t_samples[:, j][:, None]).sum(axis=1)) / n
        combined[j] = _min_p_statistic(p)
    provenance = {
        "hash": _fixed_center_hash(config, bandwidths),
        "master_seed": config.rng_seed,
        "n_steps": config.n_steps,
        "source": source.descriptor(),
    }
    return FixedCenterStore(bandwidths, t_samples, combined, provenance)


@dataclass
class FixedCenterReport:
    per_bandwidth_t: np.ndarray
    per_bandwidth_p: np.ndarray
    min_p: float
    global_p: float
    provenance_hash: str


def fixed_center_np_test(reference: PointSet, data: PointSet,
                         store: FixedCenterStore,
                         config: FixedCenterConfig) -> FixedCenterReport:
    """Fixed-center test of one dataset against a calibrated store.

    Per-bandwidth p-values are combined by their minimum; the global p-value
    is the add-one-corrected rank of the combined statistic among the
    anomaly-free toys.
    """
    got = _fixed_center_hash(config, store.bandwidths)
    if store.provenance.get("hash") != got:
        raise ProvenanceMismatchError(
            "fixed-center store does not match this configuration"
        )
    w = config.reference_weight
    if w is None:
        w = data.size / reference.size
    reference = reference_set(reference.points, weight=w)
    rng = np.random.default_rng([config.rng_seed, 4])
    pooled = np.vstack([reference.points, data.points])
    centers = _sample_locations(pooled, config.n_centers, rng)
    t_vec = np.array([
        train_fixed_center(reference, data, centers, bw, config)[1]
        for bw in store.bandwidths
    ])
    n = store.n_toys
    p_vec = ((store.t_samples >= t_vec[:, None]).sum(axis=1) + 1) / (n + 1)
    combined = _min_p_statistic(p_vec)
    global_p = ((store.combined_samples >= combined).sum() + 1) / (n + 1)
    return FixedCenterReport(
        per_bandwidth_t=t_vec,
        per_bandwidth_p=p_vec,
        min_p=float(np.min(p_vec)),
        global_p=float(global_p),
        provenance_hash=got,
    )


# ---------------------------------------------------------------------------
# Nystrom MMD with fused bandwidths


@dataclass
class MmdConfig:
    bandwidths: np.ndarray | None = None  # None: median-heuristic grid
    nystrom_rank: int = 256
    n_permutations: int = 200
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_permutations < 20:
            raise ConfigError("n_permutations must be >= 20")
        if self.nystrom_rank < 1:
            raise ConfigError("nystrom_rank must be >= 1")


@dataclass
class MmdResult:
    statistic: float
    p_value: float
    bandwidths: np.ndarray
    per_bandwidth_mmd: np.ndarray


def nystrom_features(X: np.ndarray, landmarks: np.ndarray,
                     bandwidth: float) -> np.ndarray:
    """Low-rank feature map whose inner products approximate the kernel.

    Uses the symmetric inverse square root of the landmark Gram matrix with
    small eigenvalues cut; at full rank (landmarks = all points) the feature
    Gram matrix reproduces the exact kernel matrix.
    """
    bandwidth = check_positive(bandwidth, "bandwidth")
    g = 1.0 / (2.0 * bandwidth * bandwidth)
    K_ll = np.exp(-g * cdist(landmarks, landmarks, "sqeuclidean"))
    vals, vecs = np.linalg.eigh(K_ll)
    cut = vals.max() * 1e-12
    keep = vals > cut
    inv_sqrt = vecs[:, keep] / np.sqrt(vals[keep])[None, :]
    K_xl = np.exp(-g * cdist(X, landmarks, "sqeuclidean"))
    return K_xl @ inv_sqrt


def _unbiased_mmd_from_features(phi: np.ndarray, n_x: int) -> float:
    """Unbiased quadratic MMD estimate from stacked feature rows."""
    phi_x, phi_y = phi[:n_x], phi[n_x:]
    n, m = phi_x.shape[0], phi_y.shape[0]
    if n < 2 or m < 2:
        raise DataError("need at least two points per sample for unbiased MMD")
    sx = phi_x.sum(axis=0)
    sy = phi_y.sum(axis=0)
    qx = float(np.einsum("ij,ij->", phi_x, phi_x))
    qy = float(np.einsum("ij,ij->", phi_y, phi_y))
    a = (sx @ sx - qx) / (n * (n - 1))
    b = (sy @ sy - qy) / (m * (m - 1))
    c = 2.0 * (sx @ sy) / (n * m)
    return float(a + b - c)


def mmd_fuse_test(reference, data, config: MmdConfig) -> MmdResult:
    """Permutation two-sample test fusing Nystrom MMD across bandwidths.

    Per-bandwidth statistics are standardized by their spread over the
    permutation ensemble and aggregated with a log-mean-exp; the p-value is
    the add-one-corrected rank of the observed fused statistic among the
    permutation replicas.
    """
    X = _points_of(reference)
    Y = _points_of(data)
    if X.shape[1] != Y.shape[1]:
        raise DataError("dimension mismatch between the two samples")
    pooled = np.vstack([X, Y])
    n_pool = pooled.shape[0]
    if config.nystrom_rank > n_pool:
        raise ConfigError(
            f"nystrom_rank {config.nystrom_rank} exceeds pooled size {n_pool}"
        )
    rng = np.random.default_rng(config.rng_seed)
    bandwidths = config.bandwidths
    if bandwidths is None:
        bandwidths = median_heuristic_bandwidths(pooled, rng=rng)
    bandwidths = np.asarray(bandwidths, dtype=np.float64)

    if config.nystrom_rank == n_pool:
        landmarks = pooled
    else:
        landmarks = pooled[rng.choice(n_pool, config.nystrom_rank, replace=False)]

    n_x = X.shape[0]
    n_perm = config.n_permutations
    perms = np.stack([rng.permutation(n_pool) for _ in range(n_perm)])

    raw = np.empty((bandwidths.size, n_perm + 1))  # column 0: observed
    for b, bw in enumerate(bandwidths):
        phi = nystrom_features(pooled, landmarks, bw)
        raw[b, 0] = _unbiased_mmd_from_features(phi, n_x)
        for j in range(n_perm):
            raw[b, j + 1] = _unbiased_mmd_from_features(phi[perms[j]], n_x)

    scale = raw.std(axis=1, ddof=1)
    scale[scale == 0] = 1.0
    z = raw / scale[:, None]
    # log-mean-exp over bandwidths, applied to every labeling symmetrically
    zmax = z.max(axis=0)
    fused = zmax + np.log(np.exp(z - zmax[None, :]).mean(axis=0))
    p = (int((fused[1:] >= fused[0]).sum()) + 1) / (n_perm + 1)
    return MmdResult(
        statistic=float(fused[0]),
        p_value=float(p),
        bandwidths=bandwidths,
        per_bandwidth_mmd=raw[:, 0].copy(),
    )


# ---------------------------------------------------------------------------
# distance-based baselines


def _mean_cov(pts: np.ndarray, ridge: float = 0.0):
    mean = pts.mean(axis=0)
    cov = np.atleast_2d(np.cov(pts, rowvar=False))
    if ridge > 0:
        cov = cov + ridge * np.mean(np.diag(cov)) * np.eye(cov.shape[0])
    return mean, cov


def mahalanobis_test(reference, data, n_bootstrap: int = 200,
                     rng_seed: int = 0, ridge: float = 1e-6):
    """Mean squared Mahalanobis distance of the data to the reference fit.

    The reference is split in two: one half fits the mean and covariance,
    the other provides anomaly-free bootstrap datasets, so the null
    statistics are out-of-sample exactly like the inspected data (an
    in-sample bootstrap would be badly miscalibrated in high dimension).
    """
    X = _points_of(reference)
    Y = _points_of(data)
    if X.shape[1] != Y.shape[1]:
        raise DataError("dimension mismatch between the two samples")
    if X.shape[0] - Y.shape[0] < max(X.shape[1] + 2, 10):
        raise DataError(
            "reference sample too small to hold out data-sized null replicas"
        )

    def fit(pts):
        mean, cov = _mean_cov(pts, ridge)
        try:
            prec = np.linalg.inv(cov)
        except np.linalg.LinAlgError as exc:
            raise DataError("reference covariance is singular") from exc
        return mean, prec

    def statistic(pts, mean, prec):
        diff = pts - mean
        return float(np.einsum("ni,ij,nj->", diff, prec, diff) / pts.shape[0])

    mean, prec = fit(X)
    obs = statistic(Y, mean, prec)

    # each null replica is held out of its own fit, like the inspected data
    rng = np.random.default_rng(rng_seed)
    n, m = X.shape[0], Y.shape[0]
    boot = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        order = rng.permutation(n)
        held, rest = order[:m], order[m:]
        mean_b, prec_b = fit(X[rest])
        boot[b] = statistic(X[held], mean_b, prec_b)
    p = (int((boot >= obs).sum()) + 1) / (n_bootstrap + 1)
    return obs, float(p)


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)[None, :]) @ vecs.T


def frechet_distance_gaussians(mean1, cov1, mean2, cov2) -> float:
    """Frechet distance between two Gaussians from their parameters.

    ``||mu1 - mu2||^2 + tr(C1 + C2 - 2 sqrt(C1^1/2 C2 C1^1/2))`` with the
    square root taken of the symmetrized product.
    """
    mean1 = np.atleast_1d(np.asarray(mean1, dtype=np.float64))
    mean2 = np.atleast_1d(np.asarray(mean2, dtype=np.float64))
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=np.float64))
    cov2 = np.atleast_2d(np.asarray(cov2, dtype=np.float64))
    if mean1.shape != mean2.shape or cov1.shape != cov2.shape:
        raise DataError("parameter shapes do not match")
    a = _psd_sqrt(cov1)
    inner = a @ cov2 @ a
    root = sqrtm(inner)
    if np.iscomplexobj(root):
        root = root.real
    if not np.all(np.isfinite(root)):
        raise DataError("matrix square root did not converge")
    diff = mean1 - mean2
    value = float(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * np.trace(root))
    if value < -1e-8:
        raise DataError(f"negative Frechet distance {value}; covariances ill-conditioned")
    return max(value, 0.0)


def frechet_distance(reference, data) -> float:
    """Frechet distance between Gaussian fits of two samples."""
    X = _points_of(reference)
    Y = _points_of(data)
    if X.shape[1] != Y.shape[1]:
        raise DataError("dimension mismatch between the two samples")
    m1, c1 = _mean_cov(X)
    m2, c2 = _mean_cov(Y)
    return frechet_distance_gaussians(m1, c1, m2, c2)
