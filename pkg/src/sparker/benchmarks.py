"""Synthetic benchmark generators and feature-file ingestion.

Three families cover the toy studies: a 1-d unit exponential with localized
Gaussian bumps or a tail excess, a 2-d four-Gaussian mixture with bump or
scale-distortion signals, and a 1-d two-Gaussian teacher with point
anomalies.  External feature vectors enter through plain delimiter-separated
text files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .points import PointSet, data_set, reference_set

__all__ = [
    "BenchmarkSpec",
    "EXP1D_KINDS",
    "GAUSS2D_KINDS",
    "TEACHER_VARIANTS",
    "benchmark_by_name",
    "benchmark_names",
    "generate",
    "gen_exp1d",
    "gen_gauss2d",
    "gen_teacher1d",
    "load_feature_file",
    "save_feature_file",
]

# 1-d: unit exponential background; Gaussian bumps of scale 0.16 at
# increasing distance from the bulk, or a x^2 exp(-x) tail excess
EXP1D_KINDS = {
    "bulk": {"mu": 1.6, "fraction": 4.5e-2},
    "tail": {"mu": 6.4, "fraction": 5e-3},
    "extreme_tail": {"mu": 9.0, "fraction": 2.5e-3},
    "tail_excess": {"mu": None, "fraction": 4.5e-2},
    "none": {"mu": None, "fraction": 0.0},
}
EXP1D_SIGNAL_SCALE = 0.16

# 2-d: equal mixture of four isotropic Gaussians of scale 2 at the corners
# of a 16 x 16 square centered on the origin
GAUSS2D_CORNERS = np.array([[-8.0, -8.0], [-8.0, 8.0], [8.0, -8.0], [8.0, 8.0]])
GAUSS2D_SCALE = 2.0
GAUSS2D_KINDS = {
    "bulk_bump": {"center": (-6.0, -6.0), "fraction": 1e-2},
    "center_bump": {"center": (0.0, 0.0), "fraction": 1e-3},
    "smear": {"scale": 2.2, "fraction": 0.0},
    "squeeze": {"scale": 1.8, "fraction": 0.0},
    "none": {"fraction": 0.0},
}
GAUSS2D_BUMP_SCALE = 1.0

# 1-d teacher: equal mixture of unit Gaussians at -3 and +3
TEACHER_CENTERS = (-3.0, 3.0)
TEACHER_VARIANTS = {
    "single_point": [-10.0],
    "two_points": [-10.0, -5.0],
    "narrow_bump": None,
}
TEACHER_BUMP_LOC = -5.0
TEACHER_BUMP_SCALE = 0.1


@dataclass
class BenchmarkSpec:
    family: str  # exp1d | gauss2d | teacher1d
    signal_kind: str
    signal_fraction: float
    expected_background: float = 2000.0
    reference_size: int = 20000

    def __post_init__(self):
        self.family = str(self.family).lower()
        self.signal_kind = str(self.signal_kind).lower()
        if self.family == "exp1d":
            kinds = EXP1D_KINDS
        elif self.family == "gauss2d":
            kinds = GAUSS2D_KINDS
        elif self.family == "teacher1d":
            kinds = TEACHER_VARIANTS
        else:
            raise DataError(f"unknown benchmark family {self.family!r}")
        if self.signal_kind not in kinds:
            raise DataError(
                f"unknown signal kind {self.signal_kind!r} for {self.family}; "
                f"expected one of {sorted(kinds)}"
            )
        if self.signal_fraction < 0:
            raise DataError("signal_fraction must be non-negative")
        if self.expected_background <= 0:
            raise DataError("expected_background must be positive")
        if self.reference_size < 1:
            raise DataError("reference_size must be >= 1")


def benchmark_by_name(name: str) -> BenchmarkSpec:
    """Resolve ``family:kind`` into a spec with the standard parameters."""
    try:
        family, kind = name.lower().split(":", 1)
    except ValueError:
        raise DataError(f"benchmark name must look like 'family:kind', got {name!r}")
    if family == "exp1d":
        if kind not in EXP1D_KINDS:
            raise DataError(f"unknown exp1d kind {kind!r}")
        return BenchmarkSpec("exp1d", kind, EXP1D_KINDS[kind]["fraction"])
    if family == "gauss2d":
        if kind not in GAUSS2D_KINDS:
            raise DataError(f"unknown gauss2d kind {kind!r}")
        return BenchmarkSpec("gauss2d", kind, GAUSS2D_KINDS[kind]["fraction"])
    if family == "teacher1d":
        if kind not in TEACHER_VARIANTS:
            raise DataError(f"unknown teacher1d variant {kind!r}")
        return BenchmarkSpec("teacher1d", kind, 0.0,
                             expected_background=2000.0, reference_size=10000)
    raise DataError(f"unknown benchmark family {family!r}")


def benchmark_names() -> list[str]:
    names = [f"exp1d:{k}" for k in EXP1D_KINDS]
    names += [f"gauss2d:{k}" for k in GAUSS2D_KINDS]
    names += [f"teacher1d:{k}" for k in TEACHER_VARIANTS]
    return names


def _draw_counts(expected_bkg: float, expected_sig: float,
                 fluctuate: bool, rng: np.random.Generator) -> tuple[int, int]:
    if fluctuate:
        n_bkg = int(rng.poisson(expected_bkg))
        n_sig = int(rng.poisson(expected_sig)) if expected_sig > 0 else 0
    else:
        n_bkg = int(round(expected_bkg))
        n_sig = int(round(expected_sig))
    return n_bkg, n_sig


def _ref_weight(spec: BenchmarkSpec) -> float:
    return spec.expected_background / spec.reference_size


def gen_exp1d(spec: BenchmarkSpec, rng_seed: int,
              poisson_fluctuate: bool = True) -> tuple[PointSet, PointSet]:
    """Unit-exponential background with an optional localized signal."""
    if spec.family != "exp1d":
        raise DataError("spec is not an exp1d benchmark")
    rng = np.random.default_rng(rng_seed)
    ref = rng.exponential(size=(spec.reference_size, 1))
    n_bkg, n_sig = _draw_counts(
        spec.expected_background,
        spec.expected_background * spec.signal_fraction,
        poisson_fluctuate, rng,
    )
    parts = [rng.exponential(size=(n_bkg, 1))]
    if n_sig > 0:
        kind = EXP1D_KINDS[spec.signal_kind]
        if spec.signal_kind == "tail_excess":
            # density proportional to x^2 exp(-x)
            parts.append(rng.gamma(shape=3.0, scale=1.0, size=(n_sig, 1)))
        elif kind["mu"] is None:
            raise DataError(f"{spec.signal_kind!r} cannot carry signal")
        else:
            parts.append(
                rng.normal(kind["mu"], EXP1D_SIGNAL_SCALE, size=(n_sig, 1))
            )
    data = np.vstack(parts)
    if data.shape[0] < 1:
        raise DataError("drawn dataset is empty; increase expected_background")
    return reference_set(ref, weight=_ref_weight(spec)), data_set(data)


def _gauss2d_mixture(n: int, rng: np.random.Generator,
                     bottom_left_scale: float = GAUSS2D_SCALE) -> np.ndarray:
    comp = rng.integers(0, 4, size=n)
    scales = np.full(n, GAUSS2D_SCALE)
    scales[comp == 0] = bottom_left_scale  # component at (-8, -8)
    return GAUSS2D_CORNERS[comp] + scales[:, None] * rng.standard_normal((n, 2))


def gen_gauss2d(spec: BenchmarkSpec, rng_seed: int,
                poisson_fluctuate: bool = True) -> tuple[PointSet, PointSet]:
    """Four-Gaussian 2-d mixture with bump or scale-distortion signals."""
    if spec.family != "gauss2d":
        raise DataError("spec is not a gauss2d benchmark")
    rng = np.random.default_rng(rng_seed)
    ref = _gauss2d_mixture(spec.reference_size, rng)
    kind = GAUSS2D_KINDS[spec.signal_kind]
    distortion = kind.get("scale")
    n_bkg, n_sig = _draw_counts(
        spec.expected_background,
        spec.expected_background * spec.signal_fraction,
        poisson_fluctuate, rng,
    )
    if distortion is not None:
        # shape-only anomaly: same expected counts, distorted bottom-left
        data = _gauss2d_mixture(n_bkg, rng, bottom_left_scale=distortion)
    else:
        parts = [_gauss2d_mixture(n_bkg, rng)]
        if n_sig > 0:
            center = np.asarray(kind["center"])
            parts.append(center + GAUSS2D_BUMP_SCALE * rng.standard_normal((n_sig, 2)))
        data = np.vstack(parts)
    if data.shape[0] < 1:
        raise DataError("drawn dataset is empty; increase expected_background")
    return reference_set(ref, weight=_ref_weight(spec)), data_set(data)


def _teacher_density(x: np.ndarray) -> np.ndarray:
    c1, c2 = TEACHER_CENTERS
    norm = 1.0 / math.sqrt(2.0 * math.pi)
    return 0.5 * norm * (np.exp(-0.5 * (x - c1) ** 2) + np.exp(-0.5 * (x - c2) ** 2))


def _teacher_sample(n: int, rng: np.random.Generator) -> np.ndarray:
    side = rng.integers(0, 2, size=n)
    centers = np.where(side == 0, TEACHER_CENTERS[0], TEACHER_CENTERS[1])
    return (centers + rng.standard_normal(n)).reshape(-1, 1)


def gen_teacher1d(variant: str, rng_seed: int = 0, infinite: bool = False,
                  expected_background: float = 2000.0,
                  reference_size: int = 10000,
                  n_signal: int = 20,
                  grid_points: int = 4096,
                  grid_range: tuple[float, float] = (-12.0, 12.0),
                  ) -> tuple[PointSet, PointSet]:
    """Two-Gaussian teacher datasets with point or narrow-bump anomalies.

    With ``infinite=True`` the background on both sides is replaced by a
    dense deterministic grid carrying the teacher density as per-point
    weights (no sampling noise), so only the anomalous points distinguish
    the two samples.
    """
    variant = str(variant).lower()
    if variant not in TEACHER_VARIANTS:
        raise DataError(f"unknown teacher1d variant {variant!r}")
    rng = np.random.default_rng(rng_seed)

    if variant == "narrow_bump":
        anomalies = (TEACHER_BUMP_LOC
                     + TEACHER_BUMP_SCALE * rng.standard_normal(n_signal)
                     ).reshape(-1, 1)
    else:
        anomalies = np.array(TEACHER_VARIANTS[variant]).reshape(-1, 1)

    if infinite:
        grid = np.linspace(grid_range[0], grid_range[1], grid_points).reshape(-1, 1)
        w = _teacher_density(grid[:, 0])
        w = w * (expected_background / w.sum())
        ref = reference_set(grid, weight=1.0, point_weights=w)
        data_pts = np.vstack([grid, anomalies])
        data_w = np.concatenate([w, np.ones(anomalies.shape[0])])
        return ref, data_set(data_pts, point_weights=data_w)

    ref = reference_set(
        _teacher_sample(reference_size, rng),
        weight=expected_background / reference_size,
    )
    bkg = _teacher_sample(int(round(expected_background)), rng)
    return ref, data_set(np.vstack([bkg, anomalies]))


def generate(spec_or_name, rng_seed: int,
             poisson_fluctuate: bool = True) -> tuple[PointSet, PointSet]:
    """Generate a (reference, data) pair for a spec or ``family:kind`` name."""
    spec = spec_or_name
    if isinstance(spec, str):
        spec = benchmark_by_name(spec)
    if spec.family == "exp1d":
        return gen_exp1d(spec, rng_seed, poisson_fluctuate)
    if spec.family == "gauss2d":
        return gen_gauss2d(spec, rng_seed, poisson_fluctuate)
    return gen_teacher1d(
        spec.signal_kind, rng_seed,
        expected_background=spec.expected_background,
        reference_size=spec.reference_size,
    )


# ---------------------------------------------------------------------------
# feature files


def save_feature_file(path, points, header: bool = True,
                      comments: list[str] | None = None) -> None:
    """Write points as comma-separated text at full double precision."""
    pts = points.points if isinstance(points, PointSet) else np.asarray(points)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    with open(path, "w") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        if header:
            fh.write(",".join(f"x{i}" for i in range(pts.shape[1])) + "\n")
        for row in pts:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_feature_file(path, expected_dim: int | None = None) -> PointSet:
    """Read a delimiter-separated numeric table into a data-tagged PointSet.

    Comment lines starting with '#' and one optional non-numeric header row
    are skipped; commas or whitespace separate the columns.  Rows with a
    different width, non-numeric cells, or non-finite values are rejected
    with their line number.
    """
    rows = []
    dim = None
    try:
        fh = open(path, "r")
    except OSError as exc:
        raise DataError(f"cannot open feature file {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cells = [c for c in line.replace(",", " ").split() if c]
            try:
                values = [float(c) for c in cells]
            except ValueError:
                if not rows and dim is None:
                    dim = len(cells)  # header row fixes the width
                    continue
                raise DataError(
                    f"{path}: non-numeric cell on line {lineno}"
                ) from None
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise DataError(
                    f"{path}: line {lineno} has {len(values)} columns, "
                    f"expected {dim}"
                )
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}: non-finite value on line {lineno}")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    pts = np.asarray(rows, dtype=np.float64)
    if expected_dim is not None and pts.shape[1] != expected_dim:
        raise DataError(
            f"{path}: dimension {pts.shape[1]} does not match expected "
            f"{expected_dim}"
        )
    return data_set(pts)
