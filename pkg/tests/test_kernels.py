import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sparker.kernels import (
    ComponentActivation,
    SparkerModel,
    anomaly_score,
    component_activations,
    components_batch,
    evaluate_batch,
    evaluate_model,
    gaussian_kernel,
    gradient_fields_batch,
    model_gradients,
    softmax_weights,
    sphere_of_influence_radius,
    weights_batch,
)


def random_model(rng, n_kernels, dim, clip=np.inf, softmax=True, width=None):
    if width is None:
        width = float(rng.uniform(0.5, 2.0))
    amps = rng.normal(size=n_kernels)
    if np.isfinite(clip):
        amps = np.clip(amps, -clip, clip)
    return SparkerModel(
        locations=rng.normal(size=(n_kernels, dim)),
        amplitudes=amps,
        width=width,
        clip_bound=clip,
        softmax=softmax,
    )


# ---------------------------------------------------------------------------
# gaussian_kernel


def test_kernel_at_center_is_one():
    for d in (1, 3, 7):
        x = np.full(d, 0.3)
        assert gaussian_kernel(x, x, sigma_any := 1.7) == 1.0
        assert 0.0 < gaussian_kernel(x + 1.0, x, sigma_any) < 1.0


def test_kernel_analytic_1d():
    assert_allclose(gaussian_kernel([1.0], [0.0], 1.0), math.exp(-0.5), rtol=1e-15)


def test_kernel_analytic_2d():
    assert_allclose(
        gaussian_kernel([3.0, 4.0], [0.0, 0.0], 5.0), math.exp(-0.5), rtol=1e-15
    )


def test_kernel_rejects_bad_inputs():
    with pytest.raises(ValueError):
        gaussian_kernel([1.0, 2.0], [0.0], 1.0)
    with pytest.raises(ValueError):
        gaussian_kernel([1.0], [0.0], 0.0)
    with pytest.raises(ValueError):
        gaussian_kernel([1.0], [0.0], -1.0)
    with pytest.raises(ValueError):
        gaussian_kernel([np.nan], [0.0], 1.0)


# ---------------------------------------------------------------------------
# softmax weights


def test_single_kernel_weight_is_one():
    m = SparkerModel(locations=[[0.0, 0.0]], amplitudes=[1.5], width=2.0)
    w = softmax_weights([3.0, -1.0], m)
    assert_allclose(w, [1.0], rtol=0, atol=0)


def test_equidistant_weights_are_half():
    m = SparkerModel(locations=[[-1.0], [1.0]], amplitudes=[1.0, -2.0], width=1.0)
    assert_allclose(softmax_weights([0.0], m), [0.5, 0.5], rtol=1e-15)


def test_far_pair_weights_match_extended_precision():
    # locations {0, 10}, width 1, x = 0: the far weight is
    # exp(-50) / (1 + exp(-50)) evaluated at 50-digit precision.
    far_weight = 1.9287498479639178e-22
    m = SparkerModel(locations=[[0.0], [10.0]], amplitudes=[1.0, 1.0], width=1.0)
    w = softmax_weights([0.0], m)
    assert abs(w[0] - 1.0) <= 1e-21
    assert_allclose(w[1], far_weight, rtol=1e-12)


def test_weights_sum_to_one_and_positive():
    rng = np.random.default_rng(7)
    m = random_model(rng, 6, 3)
    X = rng.normal(size=(200, 3)) * 5
    W = weights_batch(X, m)
    assert np.all(W > 0)
    assert_allclose(W.sum(axis=1), np.ones(200), rtol=0, atol=1e-12)


def test_weights_underflow_fallback_is_one_hot():
    # kernels so narrow that every kernel value underflows in log space
    m = SparkerModel(
        locations=[[0.0], [10.0]], amplitudes=[1.0, 1.0], width=1e-160
    )
    w = softmax_weights([2.0], m)
    assert_allclose(w, [1.0, 0.0])
    assert np.isfinite(evaluate_model([2.0], m))


# ---------------------------------------------------------------------------
# model evaluation and components


def test_zero_amplitudes_evaluate_to_zero():
    rng = np.random.default_rng(0)
    m = SparkerModel(
        locations=rng.normal(size=(4, 2)), amplitudes=np.zeros(4), width=1.3
    )
    X = rng.normal(size=(50, 2))
    assert_allclose(evaluate_batch(X, m), np.zeros(50), rtol=0, atol=0)


def test_single_kernel_at_center():
    m = SparkerModel(locations=[[0.5, -0.5]], amplitudes=[2.0], width=0.7)
    assert_allclose(evaluate_model([0.5, -0.5], m), 2.0, rtol=1e-15)


def test_antisymmetric_pair_cancels():
    m = SparkerModel(locations=[[-1.0], [1.0]], amplitudes=[1.0, -1.0], width=1.0)
    assert_allclose(evaluate_model([0.0], m), 0.0, atol=1e-16)


def test_components_sum_to_model_value():
    rng = np.random.default_rng(11)
    m = random_model(rng, 3, 2)
    X = rng.normal(size=(100, 2)) * 3
    comps = components_batch(X, m)
    f = evaluate_batch(X, m)
    assert_allclose(comps.sum(axis=1), f, rtol=1e-12, atol=1e-300)
    one = component_activations(X[0], m)
    assert isinstance(one, ComponentActivation)
    assert_allclose(one.values, comps[0], rtol=1e-15)
    assert_allclose(one.total, f[0], rtol=1e-12)


def test_components_single_kernel_is_model_value():
    m = SparkerModel(locations=[[0.0]], amplitudes=[0.8], width=1.0)
    act = component_activations([0.4], m)
    assert_allclose(act.values, [evaluate_model([0.4], m)], rtol=1e-15)


# ---------------------------------------------------------------------------
# anomaly score


def test_score_of_zero_model_is_half():
    m = SparkerModel(locations=[[0.0]], amplitudes=[0.0], width=1.0)
    assert anomaly_score([3.0], m) == 0.5


def test_score_monotone_limit():
    # single kernel, amplitude at the clip bound, evaluated at the center
    m = SparkerModel(
        locations=[[0.0]], amplitudes=[60.0], width=1.0, clip_bound=60.0
    )
    assert anomaly_score([0.0], m) > 1 - 1e-15


def test_score_analytic_log3():
    # f = ln 3 -> score = 3/4; place the point at the kernel center
    m = SparkerModel(locations=[[0.0]], amplitudes=[math.log(3.0)], width=1.0)
    assert_allclose(anomaly_score([0.0], m), 0.75, rtol=1e-14)


# ---------------------------------------------------------------------------
# gradients


def finite_difference_gradients(x, model, step=1e-5):
    """Central finite differences of f(x) in every model parameter."""
    d_amp = np.zeros(model.num_kernels)
    d_loc = np.zeros_like(model.locations)
    for i in range(model.num_kernels):
        for sign in (+1.0, -1.0):
            m2 = model.copy()
            m2.amplitudes = m2.amplitudes.copy()
            m2.amplitudes[i] += sign * step
            d_amp[i] += sign * evaluate_model(x, m2)
        d_amp[i] /= 2 * step
        for j in range(model.dim):
            for sign in (+1.0, -1.0):
                m2 = model.copy()
                m2.locations = m2.locations.copy()
                m2.locations[i, j] += sign * step
                d_loc[i, j] += sign * evaluate_model(x, m2)
            d_loc[i, j] /= 2 * step
    return d_amp, d_loc


def test_gradients_zero_amplitudes():
    rng = np.random.default_rng(3)
    m = SparkerModel(
        locations=rng.normal(size=(3, 2)), amplitudes=np.zeros(3), width=1.0
    )
    g = model_gradients(rng.normal(size=2), m)
    assert np.all(g.d_amplitudes > 0)
    assert_allclose(g.d_locations, np.zeros((3, 2)), atol=0)


def test_gradient_analytic_single_kernel():
    # a=1, center 0, width 1, x=1: k = exp(-1/2), weight = 1, f = k;
    # df/da = k and df/dcenter = (2k - k) * 1 * (1 - 0) = k
    m = SparkerModel(locations=[[0.0]], amplitudes=[1.0], width=1.0)
    g = model_gradients([1.0], m)
    k = math.exp(-0.5)
    assert_allclose(g.d_amplitudes, [k], rtol=1e-14)
    assert_allclose(g.d_locations, [[k]], rtol=1e-14)


@pytest.mark.parametrize("softmax", [True, False])
def test_gradients_match_finite_differences(softmax):
    rng = np.random.default_rng(17)
    m = random_model(rng, 4, 3, softmax=softmax)
    for _ in range(50):
        x = rng.normal(size=3) * 2
        g = model_gradients(x, m)
        fd_amp, fd_loc = finite_difference_gradients(x, m)
        assert_allclose(g.d_amplitudes, fd_amp, rtol=1e-5, atol=1e-8)
        assert_allclose(g.d_locations, fd_loc, rtol=1e-5, atol=1e-8)


def test_location_gradient_is_radial():
    # cross product with the displacement vanishes in 3d
    rng = np.random.default_rng(23)
    m = random_model(rng, 5, 3)
    for _ in range(20):
        x = rng.normal(size=3) * 3
        g = model_gradients(x, m)
        for i in range(m.num_kernels):
            r = x - m.locations[i]
            cross = np.cross(g.d_locations[i], r)
            assert_allclose(cross, np.zeros(3), atol=1e-18 + 1e-12 * np.abs(g.d_locations[i]).max())


def test_gradient_locality_bound():
    # outside the influence radius both gradients are alpha-suppressed
    clip = 5.0
    rng = np.random.default_rng(5)
    for alpha in (1e-3, 1e-6):
        for a in (clip, -clip, 0.7):
            m = SparkerModel(
                locations=[[0.0, 0.0]], amplitudes=[a], width=1.5, clip_bound=clip
            )
            r_alpha = sphere_of_influence_radius(m.width, alpha)
            for _ in range(25):
                direction = rng.normal(size=2)
                direction /= np.linalg.norm(direction)
                x = direction * r_alpha * rng.uniform(1.0001, 3.0)
                g = model_gradients(x, m)
                dist = np.linalg.norm(x)
                assert abs(g.d_amplitudes[0]) <= alpha * (1 + 1e-12)
                bound = clip * alpha * dist / m.width**2
                assert np.linalg.norm(g.d_locations[0]) <= bound * (1 + 1e-12)


# ---------------------------------------------------------------------------
# sphere of influence


def test_influence_radius_analytic():
    assert_allclose(sphere_of_influence_radius(1.0, math.exp(-0.5)), 1.0, rtol=1e-14)
    assert_allclose(sphere_of_influence_radius(2.0, math.exp(-2.0)), 4.0, rtol=1e-14)


def test_influence_radius_limit_and_inversion():
    assert sphere_of_influence_radius(3.0, 1 - 1e-12) < 1e-4
    for sigma, alpha in [(0.3, 1e-3), (2.0, 0.2)]:
        r = sphere_of_influence_radius(sigma, alpha)
        assert_allclose(
            gaussian_kernel([r], [0.0], sigma), alpha, rtol=1e-10
        )


def test_influence_radius_rejects_bad_alpha():
    for alpha in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ValueError):
            sphere_of_influence_radius(1.0, alpha)


# ---------------------------------------------------------------------------
# model validation


def test_model_validation_errors():
    with pytest.raises(ValueError):
        SparkerModel(locations=[[0.0]], amplitudes=[1.0, 2.0], width=1.0)
    with pytest.raises(ValueError):
        SparkerModel(locations=[[0.0]], amplitudes=[1.0], width=0.0)
    with pytest.raises(ValueError):
        SparkerModel(locations=[[0.0]], amplitudes=[np.inf], width=1.0)
    with pytest.raises(ValueError):
        SparkerModel(locations=[[0.0]], amplitudes=[3.0], width=1.0, clip_bound=2.0)


def test_dimension_mismatch_raises():
    m = SparkerModel(locations=[[0.0, 0.0]], amplitudes=[1.0], width=1.0)
    with pytest.raises(ValueError):
        evaluate_model([1.0], m)
    with pytest.raises(ValueError):
        model_gradients([1.0, 2.0, 3.0], m)
