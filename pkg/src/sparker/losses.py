"""Two-sample training objectives and their closed-form parameter gradients.

The primary objective rewards the model for matching the log-density ratio
between the inspected data and the reference sample; minimizing it maximizes
an extended likelihood ratio, and the test statistic is minus twice its
value.  Logistic (BCE) and squared-error (MSE) objectives are provided for
ablation studies.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .kernels import SparkerModel, evaluate_batch, gradient_fields_batch
from .points import PointSet, check_pair

__all__ = [
    "LOSS_KINDS",
    "np_loss",
    "surrogate_loss",
    "loss_value",
    "loss_gradients",
    "test_statistic",
]

LOSS_KINDS = ("np", "bce", "mse")


def _norm_kind(kind: str) -> str:
    k = str(kind).lower()
    if k not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
    return k


def _model_values(model, reference, data):
    check_pair(reference, data)
    if reference.dim != model.dim:
        raise ValueError("model dimension does not match the point sets")
    f_ref = evaluate_batch(reference.points, model)
    f_data = evaluate_batch(data.points, model)
    return f_ref, f_data


def np_loss(model: SparkerModel, reference: PointSet, data: PointSet) -> float:
    """Likelihood-ratio objective (no regularization terms).

    ``sum_R w * (exp(f) - 1) - sum_D f`` with ``w`` the reference balancing
    weight; zero for the null model f = 0.
    """
    f_ref, f_data = _model_values(model, reference, data)
    with np.errstate(over="ignore"):
        e_ref = np.exp(f_ref)
    if not np.all(np.isfinite(e_ref)):
        raise ValueError(
            "exp(f) overflowed on the reference sample; the model is "
            "diverging (enable amplitude clipping)"
        )
    w_ref = reference.weight * reference.weights_vector()
    value = float(w_ref @ (e_ref - 1.0) - data.weights_vector() @ f_data)
    if not np.isfinite(value):
        raise ValueError("non-finite loss value")
    return value


def _bce_loss(f_ref, f_data, w_ref, w_data):
    # -log(1 - sigmoid(f)) = softplus(f);  -log(sigmoid(f)) = softplus(-f)
    return float(w_ref @ np.logaddexp(0.0, f_ref) + w_data @ np.logaddexp(0.0, -f_data))


def _mse_loss(f_ref, f_data, w_ref, w_data):
    s_ref = expit(f_ref)
    s_data_c = expit(-f_data)  # 1 - sigmoid(f)
    return float(w_ref @ (s_ref * s_ref) + w_data @ (s_data_c * s_data_c))


def loss_value(model, reference, data, kind: str = "np") -> float:
    """Value of the selected objective on a (reference, data) pair."""
    kind = _norm_kind(kind)
    if kind == "np":
        return np_loss(model, reference, data)
    f_ref, f_data = _model_values(model, reference, data)
    w_ref = reference.weight * reference.weights_vector()
    w_data = data.weights_vector()
    if kind == "bce":
        return _bce_loss(f_ref, f_data, w_ref, w_data)
    return _mse_loss(f_ref, f_data, w_ref, w_data)


def surrogate_loss(model, reference, data, kind: str) -> float:
    """BCE or MSE alternative objective (same reference weighting)."""
    kind = _norm_kind(kind)
    if kind == "np":
        raise ValueError("surrogate_loss expects 'bce' or 'mse'")
    return loss_value(model, reference, data, kind)


def test_statistic(loss: float) -> float:
    """Test statistic: minus twice the likelihood-ratio objective."""
    loss = float(loss)
    if not np.isfinite(loss):
        raise ValueError("loss value must be finite")
    return -2.0 * loss


def _point_grad_weights(kind, f_ref, f_data, w_ref, w_data):
    """Per-point multiplier g(x) such that dL/dtheta = sum g(x) df/dtheta."""
    if kind == "np":
        with np.errstate(over="ignore"):
            g_ref = w_ref * np.exp(f_ref)
        if not np.all(np.isfinite(g_ref)):
            raise ValueError("exp(f) overflowed while computing gradients")
        g_data = -w_data
    elif kind == "bce":
        g_ref = w_ref * expit(f_ref)
        g_data = -w_data * expit(-f_data)
    else:  # mse
        s_ref = expit(f_ref)
        s_data = expit(f_data)
        g_ref = w_ref * 2.0 * s_ref * s_ref * (1.0 - s_ref)
        g_data = -w_data * 2.0 * s_data * (1.0 - s_data) ** 2
    return g_ref, g_data


def loss_gradients(model, reference, data, kind: str = "np"):
    """Closed-form gradients of the objective in the model parameters.

    Returns
    -------
    grad_amplitudes : ndarray, shape (n_kernels,)
    grad_locations : ndarray, shape (n_kernels, dim)
    """
    kind = _norm_kind(kind)
    f_ref, f_data = _model_values(model, reference, data)
    w_ref = reference.weight * reference.weights_vector()
    w_data = data.weights_vector()
    g_ref, g_data = _point_grad_weights(kind, f_ref, f_data, w_ref, w_data)

    grad_a = np.zeros(model.num_kernels)
    grad_mu = np.zeros_like(model.locations)
    for pts, g in ((reference.points, g_ref), (data.points, g_data)):
        d_amp, coeff = gradient_fields_batch(pts, model)
        gc = g[:, None] * coeff
        grad_a += g @ d_amp
        grad_mu += gc.T @ pts - gc.sum(axis=0)[:, None] * model.locations
    return grad_a, grad_mu
