"""Gaussian kernel ensemble with competitive activation.

The model is a linear combination of isotropic Gaussian kernels sharing one
width, where each kernel's contribution is modulated by a competitive
normalization over the ensemble (a softmax over negative squared distances
with temperature ``2 * width**2``).  Evaluations, per-kernel components,
anomaly scores, and closed-form parameter gradients all live here; they are
pure functions of immutable inputs and safe for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._validation import as_point, as_points, check_dim, check_positive

__all__ = [
    "SparkerModel",
    "ComponentActivation",
    "GradientBundle",
    "gaussian_kernel",
    "softmax_weights",
    "evaluate_model",
    "component_activations",
    "anomaly_score",
    "model_gradients",
    "sphere_of_influence_radius",
]

# Softmax contributions below exp(-745) underflow double precision; rows where
# every kernel is that far away fall back to a one-hot at the nearest kernel
# (the zero-width limit of the competition), keeping evaluations finite.
_LOG_UNDERFLOW = -745.0


@dataclass
class SparkerModel:
    """Ensemble state: kernel locations, amplitudes, shared width.

    Parameters
    ----------
    locations : ndarray, shape (n_kernels, dim)
        Kernel centers.
    amplitudes : ndarray, shape (n_kernels,)
        Signed kernel amplitudes.
    width : float
        Shared positive kernel width.
    clip_bound : float
        Bound on ``|amplitude|``; ``inf`` disables clipping.
    softmax : bool
        Whether the competitive normalization is active.  When false the
        model is a plain kernel expansion.
    """

    locations: np.ndarray
    amplitudes: np.ndarray
    width: float
    clip_bound: float = np.inf
    softmax: bool = True

    def __post_init__(self):
        self.locations = as_points(self.locations, "locations")
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.float64).reshape(-1)
        if self.amplitudes.shape[0] != self.locations.shape[0]:
            raise ValueError(
                f"got {self.amplitudes.shape[0]} amplitudes for "
                f"{self.locations.shape[0]} locations"
            )
        if not np.all(np.isfinite(self.amplitudes)):
            raise ValueError("amplitudes contain non-finite values")
        self.width = check_positive(self.width, "width")
        self.clip_bound = float(self.clip_bound)
        if not self.clip_bound > 0:
            raise ValueError("clip_bound must be positive (use inf to disable)")
        if np.isfinite(self.clip_bound):
            if np.any(np.abs(self.amplitudes) > self.clip_bound * (1 + 1e-12)):
                raise ValueError("amplitudes exceed clip_bound")

    @property
    def num_kernels(self) -> int:
        return self.locations.shape[0]

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    def with_width(self, width: float) -> "SparkerModel":
        """Copy of the model with a different shared width."""
        return SparkerModel(
            self.locations.copy(),
            self.amplitudes.copy(),
            width,
            self.clip_bound,
            self.softmax,
        )

    def copy(self) -> "SparkerModel":
        return self.with_width(self.width)


@dataclass
class ComponentActivation:
    """Per-kernel decomposition of one model evaluation."""

    values: np.ndarray  # shape (n_kernels,)
    total: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.total is None:
            self.total = float(self.values.sum())


@dataclass
class GradientBundle:
    """Closed-form model gradients at one point."""

    d_amplitudes: np.ndarray  # shape (n_kernels,)
    d_locations: np.ndarray  # shape (n_kernels, dim)


def gaussian_kernel(x, center, width: float) -> float:
    """Isotropic Gaussian profile ``exp(-||x - center||^2 / (2 width^2))``.

    Returns a value in (0, 1]; equals 1 exactly when ``x == center``.
    """
    x = as_point(x, "x")
    center = as_point(center, "center")
    check_dim(x.size, center.size, "x")
    width = check_positive(width, "width")
    diff = x - center
    return float(np.exp(-diff @ diff / (2.0 * width * width)))


def _sq_dists(X: np.ndarray, locations: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, shape (n_points, n_kernels)."""
    diff = X[:, None, :] - locations[None, :, :]
    return np.einsum("nmd,nmd->nm", diff, diff)


def _log_kernels(X: np.ndarray, model: SparkerModel) -> np.ndarray:
    # subnormal widths overflow the scaling to -inf; that is handled by the
    # one-hot fallback downstream
    with np.errstate(over="ignore"):
        return -_sq_dists(X, model.locations) / (2.0 * model.width * model.width)


def _weights_from_log(Z: np.ndarray) -> np.ndarray:
    """Competition weights from log kernel values, row-stable.

    Rows whose largest log value is below the double-precision underflow
    threshold get a one-hot at the nearest kernel.
    """
    zmax = Z.max(axis=1, keepdims=True)
    dead = ~np.isfinite(zmax[:, 0]) | (zmax[:, 0] < _LOG_UNDERFLOW)
    with np.errstate(invalid="ignore"):
        shifted = np.where(dead[:, None], 0.0, Z - zmax)
    E = np.exp(shifted)
    P = E / E.sum(axis=1, keepdims=True)
    if np.any(dead):
        # argmax of Z is the argmin of the squared distance; a NaN arises only
        # from 0 * inf (point exactly on a kernel at subnormal width), which
        # must win the tie
        nearest = np.argmax(np.where(np.isnan(Z), np.inf, Z), axis=1)
        P[dead] = 0.0
        P[dead, nearest[dead]] = 1.0
    return P


def _batch(X, model: SparkerModel) -> np.ndarray:
    X = as_points(X, "X")
    check_dim(X.shape[1], model.dim, "X")
    return X


def kernel_values(X, model: SparkerModel) -> np.ndarray:
    """Kernel matrix k_i(x_n), shape (n_points, n_kernels)."""
    X = _batch(X, model)
    return np.exp(_log_kernels(X, model))


def softmax_weights(x, model: SparkerModel) -> np.ndarray:
    """Competition weights at one point: positive, summing to one."""
    X = as_point(x, "x").reshape(1, -1)
    check_dim(X.shape[1], model.dim, "x")
    return _weights_from_log(_log_kernels(X, model))[0]


def weights_batch(X, model: SparkerModel) -> np.ndarray:
    """Competition weights for a batch, shape (n_points, n_kernels)."""
    X = _batch(X, model)
    if not model.softmax:
        return np.ones((X.shape[0], model.num_kernels))
    return _weights_from_log(_log_kernels(X, model))


def components_batch(X, model: SparkerModel) -> np.ndarray:
    """Per-kernel contributions a_i * w_i(x) * k_i(x), shape (n, n_kernels).

    With competition enabled the product ``w_i * k_i`` is assembled in log
    space so that it stays accurate when individual kernel values underflow.
    """
    X = _batch(X, model)
    Z = _log_kernels(X, model)
    if not model.softmax:
        return model.amplitudes[None, :] * np.exp(Z)
    zmax = Z.max(axis=1, keepdims=True)
    dead = ~np.isfinite(zmax[:, 0]) | (zmax[:, 0] < _LOG_UNDERFLOW)
    safe_zmax = np.where(dead[:, None], 0.0, zmax)
    with np.errstate(invalid="ignore"):
        E = np.exp(np.where(dead[:, None], -np.inf, Z - safe_zmax))
    denom = E.sum(axis=1, keepdims=True)
    denom[denom == 0.0] = 1.0
    # w_i * k_i = exp(2 z_i - zmax) / sum_j exp(z_j - zmax)
    WK = np.exp(2.0 * np.where(dead[:, None], -np.inf, Z) - safe_zmax) / denom
    return model.amplitudes[None, :] * WK


def evaluate_batch(X, model: SparkerModel) -> np.ndarray:
    """Model values f(x_n) for a batch of points, shape (n_points,)."""
    return components_batch(X, model).sum(axis=1)


def evaluate_model(x, model: SparkerModel) -> float:
    """Model value f(x) = sum_i a_i * w_i(x) * k_i(x)."""
    x = as_point(x, "x")
    check_dim(x.size, model.dim, "x")
    return float(evaluate_batch(x.reshape(1, -1), model)[0])


def component_activations(x, model: SparkerModel) -> ComponentActivation:
    """Per-kernel decomposition of f(x); the values sum to f(x)."""
    x = as_point(x, "x")
    check_dim(x.size, model.dim, "x")
    values = components_batch(x.reshape(1, -1), model)[0]
    return ComponentActivation(values=values)


def anomaly_score(x, model: SparkerModel) -> float:
    """Logistic transform of the model value, in (0, 1)."""
    return float(expit(evaluate_model(x, model)))


def scores_batch(X, model: SparkerModel) -> np.ndarray:
    return expit(evaluate_batch(X, model))


def gradient_fields_batch(X, model: SparkerModel):
    """Closed-form gradient pieces for a batch.

    Returns
    -------
    d_amp : ndarray, shape (n_points, n_kernels)
        Amplitude gradients ``w_i(x) * k_i(x)``.
    coeff : ndarray, shape (n_points, n_kernels)
        Radial coefficients: the location gradient of kernel i at point x is
        ``coeff[n, i] * (x_n - locations[i])``.
    """
    X = _batch(X, model)
    Z = _log_kernels(X, model)
    K = np.exp(Z)
    inv_s2 = 1.0 / (model.width * model.width)
    if not model.softmax:
        d_amp = K
        coeff = inv_s2 * model.amplitudes[None, :] * K
        return d_amp, coeff
    P = _weights_from_log(Z)
    d_amp = P * K
    f = (model.amplitudes[None, :] * d_amp).sum(axis=1, keepdims=True)
    coeff = inv_s2 * (2.0 * model.amplitudes[None, :] * K - f) * P
    return d_amp, coeff


def model_gradients(x, model: SparkerModel) -> GradientBundle:
    """Gradients of f(x) with respect to amplitudes and locations.

    The location gradient of each kernel is radial: a scalar coefficient
    times the displacement from the kernel to the point.
    """
    x = as_point(x, "x")
    check_dim(x.size, model.dim, "x")
    d_amp, coeff = gradient_fields_batch(x.reshape(1, -1), model)
    d_locations = coeff[0][:, None] * (x[None, :] - model.locations)
    return GradientBundle(d_amplitudes=d_amp[0], d_locations=d_locations)


def sphere_of_influence_radius(width: float, alpha: float) -> float:
    """Radius at which the kernel profile drops to ``alpha``.

    Inverts ``exp(-r^2 / (2 width^2)) = alpha`` for alpha in (0, 1).
    """
    width = check_positive(width, "width")
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return float(width * np.sqrt(-2.0 * np.log(alpha)))
