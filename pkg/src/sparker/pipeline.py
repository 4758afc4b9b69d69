"""Bootstrap calibration and multi-resolution testing.

Calibration trains the model on many anomaly-free datasets and records the
test statistic at every checkpoint width; detection trains once on the
inspected data, turns the per-width statistics into empirical p-values
against the stored samples, combines them across widths, and calibrates the
combined statistic against the anomaly-free ensemble.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from ._validation import check_positive, check_unit_interval
from .benchmarks import BenchmarkSpec, generate
from .errors import ConfigError, DataError, ProvenanceMismatchError, TrainingDivergedError
from .kernels import SparkerModel, components_batch, scores_batch
from .losses import np_loss, test_statistic
from .points import PointSet, data_set, reference_set
from .training import (
    AnnealingSchedule,
    TrainConfig,
    TrainOutput,
    _sample_locations,
    init_model,
    train,
)

__all__ = [
    "PipelineConfig",
    "CalibrationStore",
    "TestReport",
    "PowerResult",
    "BenchmarkNullSource",
    "PoolNullSource",
    "make_toy",
    "empirical_pvalue",
    "combine_pvalues",
    "calibrate",
    "detect",
    "power_at_fpr",
    "calibration_global_pvalues",
    "ks_uniformity",
]

MIN_CALIBRATION_TOYS = 20
COMBINER = "half-min-plus-mean-neglog"


# ---------------------------------------------------------------------------
# configuration and provenance


@dataclass
class PipelineConfig:
    """Model, schedule, and pipeline settings for calibrate/detect runs."""

    n_kernels: int = 5
    n_steps: int = 20_000
    n_checkpoints: int = 4
    learning_rate: float = 1e-2
    l2_coefficient: float = 0.0
    clip_bound: float = 100.0
    loss_kind: str = "np"
    softmax_enabled: bool = True
    sigma_initial: float | None = None  # None: pairwise-quantile rule
    sigma_final: float | None = None
    reference_weight: float | None = None  # None: expected-counts ratio
    rng_seed: int = 0
    n_workers: int = 1

    def train_config(self, rng_seed=None) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            l2_coefficient=self.l2_coefficient,
            clip_bound=self.clip_bound,
            loss_kind=self.loss_kind,
            softmax_enabled=self.softmax_enabled,
            rng_seed=self.rng_seed if rng_seed is None else rng_seed,
        )


def provenance_hash(config: PipelineConfig, schedule: AnnealingSchedule,
                    combiner: str = COMBINER) -> str:
    payload = {
        "n_kernels": config.n_kernels,
        "n_steps": schedule.total_steps,
        "learning_rate": config.learning_rate,
        "l2_coefficient": config.l2_coefficient,
        "clip_bound": None if np.isinf(config.clip_bound) else config.clip_bound,
        "loss_kind": config.loss_kind,
        "softmax_enabled": config.softmax_enabled,
        "sigma_initial": schedule.sigma_initial,
        "sigma_final": schedule.sigma_final,
        "checkpoint_sigmas": list(map(float, schedule.checkpoint_sigmas)),
        "combiner": combiner,
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# anomaly-free sources


@dataclass
class BenchmarkNullSource:
    """Draws fresh (reference, null data) pairs from a benchmark generator."""

    spec: BenchmarkSpec
    poisson: bool = True

    def __post_init__(self):
        if self.spec.family not in ("exp1d", "gauss2d"):
            raise ConfigError(
                f"no anomaly-free calibration source for family {self.spec.family!r}"
            )
        self.null_spec = replace(self.spec, signal_kind="none", signal_fraction=0.0)

    @property
    def expected_n(self) -> float:
        return self.spec.expected_background

    def draw_pair(self, rng) -> tuple[PointSet, PointSet]:
        return generate(self.null_spec, rng, poisson_fluctuate=self.poisson)

    def descriptor(self) -> dict:
        return {
            "type": "benchmark",
            "family": self.spec.family,
            "expected_background": self.spec.expected_background,
            "reference_size": self.spec.reference_size,
            "poisson": self.poisson,
        }


@dataclass
class PoolNullSource:
    """Fixed reference plus bootstrapped null datasets from a point pool."""

    reference: PointSet
    expected_n: float
    pool: np.ndarray | None = None  # defaults to the reference points
    poisson: bool = True
    with_replacement: bool | None = None  # None: only when the pool is too small

    def __post_init__(self):
        if self.pool is None:
            self.pool = self.reference.points
        self.expected_n = check_positive(self.expected_n, "expected_n")

    def draw_pair(self, rng) -> tuple[PointSet, PointSet]:
        ref = reference_set(
            self.reference.points,
            weight=self.expected_n / self.reference.size,
        )
        toy = make_toy(self.pool, self.expected_n, self.poisson, rng,
                       with_replacement=self.with_replacement)
        return ref, toy

    def descriptor(self) -> dict:
        return {
            "type": "pool",
            "reference_size": int(self.reference.size),
            "pool_size": int(self.pool.shape[0]),
            "expected_n": self.expected_n,
            "poisson": self.poisson,
        }


def make_toy(source, expected_n: float, poisson_fluctuate: bool, rng_seed,
             with_replacement: bool | None = None) -> PointSet:
    """Draw one anomaly-free dataset from a generator or a finite pool.

    ``source`` is either a callable ``(n, rng) -> (n, dim) array`` or a
    finite array pool.  The size is Poisson-fluctuated around ``expected_n``
    unless fluctuation is disabled.  Pool sampling is without replacement
    when the pool is large enough (or when explicitly requested), otherwise
    with replacement.
    """
    rng = np.random.default_rng(rng_seed)
    if poisson_fluctuate:
        n = int(rng.poisson(expected_n))
    else:
        n = int(round(expected_n))
    if n < 1:
        raise DataError("drawn dataset is empty; increase expected_n")
    if callable(source):
        pts = np.asarray(source(n, rng), dtype=np.float64)
        return data_set(pts)
    pool = np.asarray(source, dtype=np.float64)
    if pool.ndim == 1:
        pool = pool.reshape(-1, 1)
    replace_draws = with_replacement
    if replace_draws is None:
        replace_draws = n > pool.shape[0]
    if not replace_draws and n > pool.shape[0]:
        raise DataError(
            f"requested {n} points from a pool of {pool.shape[0]} "
            "without replacement"
        )
    idx = rng.choice(pool.shape[0], size=n, replace=replace_draws)
    return data_set(pool[idx])


# ---------------------------------------------------------------------------
# p-values and combination


def empirical_pvalue(t_obs: float, samples) -> float:
    """Add-one-corrected right-tail rank of ``t_obs`` in ``samples``."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size == 0:
        raise ValueError("need at least one calibration sample")
    t_obs = float(t_obs)
    count = int(np.sum(samples >= t_obs))
    return (count + 1) / (samples.size + 1)


def combine_pvalues(pvalues) -> float:
    """Multi-resolution combination of per-width p-values.

    Average of the worst (minimum) log p-value and the mean log p-value,
    negated: larger means more anomalous, zero when every p equals one.
    """
    p = np.asarray(pvalues, dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise ValueError("need at least one p-value")
    if np.any(p <= 0) or np.any(p > 1):
        raise ValueError("p-values must lie in (0, 1]")
    logs = np.log(p)
    return float(-0.5 * logs.min() - 0.5 * logs.mean())


# ---------------------------------------------------------------------------
# calibration store


@dataclass
class CalibrationStore:
    checkpoint_sigmas: np.ndarray  # (m,)
    t_samples: np.ndarray  # (m, n_toys), row-major by width
    combined_samples: np.ndarray  # (n_toys,)
    provenance: dict
    null_scores: list | None = None  # per-toy score arrays, selected width

    @property
    def n_toys(self) -> int:
        return self.t_samples.shape[1]

    @property
    def num_widths(self) -> int:
        return self.t_samples.shape[0]

    def schedule(self) -> AnnealingSchedule:
        return AnnealingSchedule(
            sigma_initial=self.provenance["sigma_initial"],
            sigma_final=self.provenance["sigma_final"],
            total_steps=self.provenance["n_steps"],
            checkpoint_sigmas=self.checkpoint_sigmas,
        )

    def save(self, path) -> None:
        payload = {
            "format": "sparker-calibration-v1",
            "provenance": self.provenance,
            "checkpoint_sigmas": list(map(float, self.checkpoint_sigmas)),
            "t_samples": [list(map(float, row)) for row in self.t_samples],
            "combined_samples": list(map(float, self.combined_samples)),
        }
        if self.null_scores is not None:
            payload["null_scores"] = [list(map(float, s)) for s in self.null_scores]
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "CalibrationStore":
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read calibration store {path}: {exc}") from exc
        if payload.get("format") != "sparker-calibration-v1":
            raise DataError(f"{path} is not a calibration store")
        scores = payload.get("null_scores")
        return cls(
            checkpoint_sigmas=np.asarray(payload["checkpoint_sigmas"]),
            t_samples=np.asarray(payload["t_samples"]),
            combined_samples=np.asarray(payload["combined_samples"]),
            provenance=payload["provenance"],
            null_scores=None if scores is None else [np.asarray(s) for s in scores],
        )


def leave_self_out_pvalues(t_samples: np.ndarray) -> np.ndarray:
    """Per-width p-values of each calibration toy against the others.

    Column j is ranked against every column but j, with the add-one
    correction, so a continuous statistic yields exactly uniform grid
    values.
    """
    m, n = t_samples.shape
    p = np.empty((m, n))
    for s in range(m):
        row = t_samples[s]
        # ge[j] counts i with t_i >= t_j, including i = j; dropping self and
        # adding the +1 correction cancel, over (n - 1) + 1 samples
        ge = (row[None, :] >= row[:, None]).sum(axis=1)
        p[s] = ge / n
    return p


def calibration_global_pvalues(store: CalibrationStore) -> np.ndarray:
    """Leave-self-out global p-values of the calibration toys."""
    c = store.combined_samples
    ge = (c[None, :] >= c[:, None]).sum(axis=1)
    return ge / c.size  # (count excluding self) + 1 == count including self


# ---------------------------------------------------------------------------
# calibration and detection


def _resolve_schedule(source, config: PipelineConfig) -> AnnealingSchedule:
    """Freeze one schedule for all toys from a representative null pair."""
    ref, dat = source.draw_pair(np.random.default_rng([config.rng_seed, 0]))
    _, schedule = init_model(
        ref, dat, config.n_kernels, rng_seed=[config.rng_seed, 0],
        total_steps=config.n_steps, n_checkpoints=config.n_checkpoints,
        sigma_initial=config.sigma_initial, sigma_final=config.sigma_final,
    )
    return schedule


def _initial_model(reference, data, config, schedule, rng) -> SparkerModel:
    pooled = np.vstack([reference.points, data.points])
    locations = _sample_locations(pooled, config.n_kernels, rng)
    return SparkerModel(
        locations=locations,
        amplitudes=np.zeros(config.n_kernels),
        width=schedule.sigma_initial,
        clip_bound=config.clip_bound,
        softmax=config.softmax_enabled,
    )


def _checkpoint_statistics(out: TrainOutput, reference, data) -> np.ndarray:
    """Test statistic of every stored checkpoint on the training pair."""
    return np.array([
        test_statistic(np_loss(ck, reference, data)) for ck in out.checkpoints
    ])


def _train_toy(source, config, schedule, toy_index, collect_scores):
    last_error = None
    for attempt in range(2):
        rng = np.random.default_rng([config.rng_seed, 1, toy_index, attempt])
        ref, dat = source.draw_pair(rng)
        if config.reference_weight is not None:
            ref = reference_set(ref.points, weight=config.reference_weight,
                                point_weights=ref.point_weights)
        model0 = _initial_model(ref, dat, config, schedule, rng)
        cfg = config.train_config()
        try:
            out = train(ref, dat, cfg, schedule, initial_model=model0)
        except TrainingDivergedError as exc:
            last_error = exc
            continue
        t_vec = _checkpoint_statistics(out, ref, dat)
        scores = None
        if collect_scores:
            scores = [scores_batch(dat.points, ck) for ck in out.checkpoints]
        return t_vec, scores, attempt
    raise TrainingDivergedError(
        last_error.step,
        f"toy {toy_index} diverged twice (resampled once); "
        "lower the learning rate or tighten the clip bound",
    )


def calibrate(source, n_toys: int, config: PipelineConfig,
              collect_scores: bool = True) -> CalibrationStore:
    """Run anomaly-free toys and build the calibration store.

    Toys run concurrently (``config.n_workers`` threads) with per-toy seeds
    derived from the master seed; results are assembled in toy order, so the
    store does not depend on completion order.  A toy whose training
    diverges is resampled once; a second failure aborts.
    """
    if n_toys < MIN_CALIBRATION_TOYS:
        raise ConfigError(
            f"n_toys must be >= {MIN_CALIBRATION_TOYS} for usable p-values"
        )
    schedule = _resolve_schedule(source, config)

    def task(i):
        return _train_toy(source, config, schedule, i, collect_scores)

    if config.n_workers > 1:
        with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
            results = list(pool.map(task, range(n_toys)))
    else:
        results = [task(i) for i in range(n_toys)]

    t_samples = np.stack([r[0] for r in results], axis=1)  # (m, n_toys)
    per_width_p = leave_self_out_pvalues(t_samples)
    combined = np.array([
        combine_pvalues(per_width_p[:, j]) for j in range(n_toys)
    ])
    null_scores = None
    if collect_scores:
        best = per_width_p.argmin(axis=0)
        null_scores = [results[j][1][best[j]] for j in range(n_toys)]

    provenance = {
        "hash": provenance_hash(config, schedule),
        "combiner": COMBINER,
        "n_steps": schedule.total_steps,
        "sigma_initial": schedule.sigma_initial,
        "sigma_final": schedule.sigma_final,
        "n_kernels": config.n_kernels,
        "loss_kind": config.loss_kind,
        "softmax_enabled": config.softmax_enabled,
        "learning_rate": config.learning_rate,
        "l2_coefficient": config.l2_coefficient,
        "clip_bound": None if np.isinf(config.clip_bound) else config.clip_bound,
        "master_seed": config.rng_seed,
        "toy_seeds": [[config.rng_seed, 1, i] for i in range(n_toys)],
        "retries": [i for i, r in enumerate(results) if r[2] > 0],
        "source": source.descriptor(),
    }
    return CalibrationStore(
        checkpoint_sigmas=schedule.checkpoint_sigmas.copy(),
        t_samples=t_samples,
        combined_samples=combined,
        provenance=provenance,
        null_scores=null_scores,
    )


@dataclass
class TestReport:
    """Outcome of one detection run."""

    __test__ = False  # not a pytest class, despite the name

    per_sigma_t: np.ndarray
    per_sigma_p: np.ndarray
    combined_statistic: float
    global_p: float
    selected_width: float
    selected_index: int
    scores_data: np.ndarray
    scores_reference: np.ndarray
    activations_data: np.ndarray  # (n_data, n_kernels)
    activations_reference: np.ndarray
    provenance_hash: str
    checkpoint_sigmas: np.ndarray = field(default=None)  # type: ignore[assignment]
    trajectory = None  # attached when requested, not serialized

    def summary_dict(self) -> dict:
        return {
            "format": "sparker-report-v1",
            "provenance_hash": self.provenance_hash,
            "checkpoint_sigmas": list(map(float, self.checkpoint_sigmas)),
            "per_sigma_t": list(map(float, self.per_sigma_t)),
            "per_sigma_p": list(map(float, self.per_sigma_p)),
            "combined_statistic": self.combined_statistic,
            "global_p": self.global_p,
            "selected_width": self.selected_width,
            "selected_index": self.selected_index,
        }

    def save(self, path) -> None:
        payload = self.summary_dict()
        payload["scores_data"] = list(map(float, self.scores_data))
        payload["scores_reference"] = list(map(float, self.scores_reference))
        payload["activations_data"] = [list(map(float, r)) for r in self.activations_data]
        payload["activations_reference"] = [
            list(map(float, r)) for r in self.activations_reference
        ]
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "TestReport":
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read report {path}: {exc}") from exc
        if payload.get("format") != "sparker-report-v1":
            raise DataError(f"{path} is not a report file")
        return cls(
            per_sigma_t=np.asarray(payload["per_sigma_t"]),
            per_sigma_p=np.asarray(payload["per_sigma_p"]),
            combined_statistic=payload["combined_statistic"],
            global_p=payload["global_p"],
            selected_width=payload["selected_width"],
            selected_index=payload["selected_index"],
            scores_data=np.asarray(payload["scores_data"]),
            scores_reference=np.asarray(payload["scores_reference"]),
            activations_data=np.asarray(payload["activations_data"]),
            activations_reference=np.asarray(payload["activations_reference"]),
            provenance_hash=payload["provenance_hash"],
            checkpoint_sigmas=np.asarray(payload["checkpoint_sigmas"]),
        )


def detect(reference: PointSet, data: PointSet, store: CalibrationStore,
           config: PipelineConfig, record_trajectory: bool = False,
           trajectory_stride: int = 100) -> TestReport:
    """Test the inspected dataset against the calibrated null.

    Trains under the store's schedule, ranks the per-width statistics in the
    stored samples (add-one correction), combines them, and ranks the
    combined statistic in the stored combined samples for the global
    p-value.  Scores and per-kernel activations come from the checkpoint
    with the smallest per-width p-value.
    """
    schedule = store.schedule()
    expected = store.provenance.get("hash")
    got = provenance_hash(config, schedule)
    if expected != got:
        raise ProvenanceMismatchError(
            f"store hash {expected} does not match configuration hash {got}; "
            "rebuild the calibration store with this configuration"
        )
    w = config.reference_weight
    if w is None:
        # match the calibration policy: expected-count ratio for Poisson
        # toy sources, observed-count ratio for fixed datasets
        src = store.provenance.get("source", {})
        expected_counts = src.get("expected_background", src.get("expected_n"))
        if expected_counts is not None and src.get("poisson", False):
            w = expected_counts / reference.size
        else:
            w = data.size / reference.size
    reference = reference_set(reference.points, weight=w,
                              point_weights=reference.point_weights)

    rng = np.random.default_rng([config.rng_seed, 2])
    model0 = _initial_model(reference, data, config, schedule, rng)
    cfg = config.train_config()
    cfg.record_trajectory = record_trajectory
    cfg.trajectory_stride = trajectory_stride
    out = train(reference, data, cfg, schedule, initial_model=model0)

    t_vec = _checkpoint_statistics(out, reference, data)
    p_vec = np.array([
        empirical_pvalue(t_vec[s], store.t_samples[s]) for s in range(t_vec.size)
    ])
    combined = combine_pvalues(p_vec)
    global_p = empirical_pvalue(combined, store.combined_samples)

    sel = int(p_vec.argmin())
    best = out.checkpoints[sel]
    report = TestReport(
        per_sigma_t=t_vec,
        per_sigma_p=p_vec,
        combined_statistic=combined,
        global_p=global_p,
        selected_width=float(store.checkpoint_sigmas[sel]),
        selected_index=sel,
        scores_data=scores_batch(data.points, best),
        scores_reference=scores_batch(reference.points, best),
        activations_data=components_batch(data.points, best),
        activations_reference=components_batch(reference.points, best),
        provenance_hash=expected,
        checkpoint_sigmas=store.checkpoint_sigmas.copy(),
    )
    report.trajectory = out.trajectory
    return report


# ---------------------------------------------------------------------------
# power estimation


@dataclass
class PowerResult:
    power: float
    ci_low: float
    ci_high: float
    threshold: float
    n_successes: int
    n_trials: int


def clopper_pearson(k: int, n: int, coverage: float = 0.68) -> tuple[float, float]:
    """Central binomial confidence interval from beta quantiles."""
    if not 0 <= k <= n or n < 1:
        raise ValueError("need 0 <= k <= n with n >= 1")
    tail = (1.0 - coverage) / 2.0
    lo = 0.0 if k == 0 else float(stats.beta.ppf(tail, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1.0 - tail, k + 1, n - k))
    return lo, hi


def power_at_fpr(null_stats, alt_stats, alpha: float,
                 coverage: float = 0.68) -> PowerResult:
    """Detection power at a fixed false-positive rate.

    The threshold is the empirical (1 - alpha) quantile of the null
    statistics; power is the fraction of alternative statistics above it,
    with a central Clopper-Pearson interval.
    """
    alpha = check_unit_interval(alpha, "alpha")
    null_stats = np.asarray(null_stats, dtype=np.float64).reshape(-1)
    alt_stats = np.asarray(alt_stats, dtype=np.float64).reshape(-1)
    if null_stats.size == 0 or alt_stats.size == 0:
        raise ValueError("need non-empty null and alternative samples")
    threshold = float(np.quantile(null_stats, 1.0 - alpha, method="higher"))
    k = int(np.sum(alt_stats > threshold))
    n = alt_stats.size
    lo, hi = clopper_pearson(k, n, coverage)
    return PowerResult(k / n, lo, hi, threshold, k, n)


# ---------------------------------------------------------------------------
# uniformity diagnostics


def ks_uniformity(pvalues, grid_size: int | None = None):
    """Kolmogorov-Smirnov distance of p-values from uniform.

    Returns ``(distance, ks_pvalue)``.  When the p-values live on a discrete
    grid of known size, the grid resolution is subtracted from the distance
    before computing the tail probability (the discrete-grid correction).
    """
    p = np.asarray(pvalues, dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise ValueError("need at least one p-value")
    d = float(stats.kstest(p, "uniform").statistic)
    d_eff = d if grid_size is None else max(0.0, d - 1.0 / grid_size)
    ks_p = float(stats.kstwo.sf(d_eff, p.size))
    return d, ks_p
