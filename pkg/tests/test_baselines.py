import numpy as np
import pytest
from numpy.testing import assert_allclose

from sparker.baselines import (
    FixedCenterConfig,
    FixedCenterStore,
    MmdConfig,
    calibrate_fixed_center,
    fixed_center_np_test,
    frechet_distance,
    frechet_distance_gaussians,
    mahalanobis_test,
    median_heuristic_bandwidths,
    mmd_fuse_test,
    nystrom_features,
    train_fixed_center,
)
from sparker.benchmarks import BenchmarkSpec
from sparker.errors import ConfigError, DataError, ProvenanceMismatchError
from sparker.pipeline import BenchmarkNullSource
from sparker.points import data_set, reference_set


def gaussian_gram(X, Y, bandwidth):
    d2 = ((X[:, None, :] - Y[None, :, :]) ** 2).sum(-1)
    return np.exp(-d2 / (2 * bandwidth**2))


def exact_unbiased_mmd(X, Y, bandwidth):
    """Direct double-loop oracle for the unbiased quadratic MMD."""
    n, m = len(X), len(Y)
    kxx = gaussian_gram(X, X, bandwidth)
    kyy = gaussian_gram(Y, Y, bandwidth)
    kxy = gaussian_gram(X, Y, bandwidth)
    a = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
    b = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    c = 2 * kxy.mean()
    return a + b - c


# ---------------------------------------------------------------------------
# fixed-center test


def test_fixed_center_zero_steps_gives_zero_statistic():
    rng = np.random.default_rng(0)
    ref = reference_set(rng.normal(size=(50, 1)))
    dat = data_set(rng.normal(size=(30, 1)))
    cfg = FixedCenterConfig(n_centers=4, n_steps=0)
    centers = rng.normal(size=(4, 1))
    for bw in (0.5, 1.0, 3.0):
        model, t = train_fixed_center(ref, dat, centers, bw, cfg)
        assert t == 0.0
        assert_allclose(model.amplitudes, np.zeros(4))


def test_fixed_center_centers_are_immutable():
    rng = np.random.default_rng(1)
    ref = reference_set(rng.normal(size=(60, 2)), weight=0.5)
    dat = data_set(rng.normal(size=(30, 2)) + 0.3)
    centers = rng.normal(size=(5, 2))
    snapshot = centers.copy()
    cfg = FixedCenterConfig(n_centers=5, n_steps=50, learning_rate=0.05)
    model, t = train_fixed_center(ref, dat, centers, 1.0, cfg)
    assert np.array_equal(model.centers, snapshot)
    assert np.array_equal(centers, snapshot)
    # amplitudes actually moved
    assert np.any(model.amplitudes != 0)


def fixed_source():
    spec = BenchmarkSpec("exp1d", "none", 0.0, expected_background=80,
                         reference_size=320)
    return BenchmarkNullSource(spec)


def test_fixed_center_calibrate_and_test(tmp_path):
    cfg = FixedCenterConfig(n_centers=3, n_steps=60, learning_rate=0.05,
                            bandwidths=[0.5, 2.0], rng_seed=5)
    store = calibrate_fixed_center(fixed_source(), 20, cfg)
    assert store.t_samples.shape == (2, 20)
    path = tmp_path / "fc.json"
    store.save(path)
    loaded = FixedCenterStore.load(path)
    assert np.array_equal(loaded.t_samples, store.t_samples)

    ref, dat = fixed_source().draw_pair(np.random.default_rng(77))
    rep = fixed_center_np_test(ref, dat, store, cfg)
    assert 1 / 21 <= rep.global_p <= 1.0
    assert rep.per_bandwidth_p.shape == (2,)
    with pytest.raises(ProvenanceMismatchError):
        fixed_center_np_test(ref, dat, store,
                             FixedCenterConfig(n_centers=4, bandwidths=[0.5, 2.0]))
    with pytest.raises(ConfigError):
        calibrate_fixed_center(fixed_source(), 5, cfg)


# ---------------------------------------------------------------------------
# Nystrom MMD


def test_full_rank_nystrom_equals_exact_gram():
    rng = np.random.default_rng(3)
    for trial in range(5):
        n = rng.integers(5, 9)
        m = rng.integers(5, 9)
        d = rng.integers(1, 4)
        X = rng.normal(size=(n, d))
        Y = rng.normal(size=(m, d)) + 0.5
        pooled = np.vstack([X, Y])
        for bw in (0.7, 1.3):
            phi = nystrom_features(pooled, pooled, bw)
            approx = phi @ phi.T
            exact = gaussian_gram(pooled, pooled, bw)
            assert_allclose(approx, exact, atol=1e-10)


def test_nystrom_error_decreases_with_rank_on_average():
    rng = np.random.default_rng(4)
    errs = {rank: 0.0 for rank in (2, 4, 8, 16, 32)}
    for trial in range(6):
        X = rng.normal(size=(16, 2))
        Y = rng.normal(size=(16, 2)) + 0.4
        pooled = np.vstack([X, Y])
        exact = exact_unbiased_mmd(X, Y, 1.0)
        for rank in errs:
            lm = pooled[rng.choice(32, rank, replace=False)]
            phi = nystrom_features(pooled, lm, 1.0)
            sx, sy = phi[:16], phi[16:]
            a = (sx.sum(0) @ sx.sum(0) - np.einsum("ij,ij->", sx, sx)) / (16 * 15)
            b = (sy.sum(0) @ sy.sum(0) - np.einsum("ij,ij->", sy, sy)) / (16 * 15)
            c = 2 * (sx.sum(0) @ sy.sum(0)) / 256
            errs[rank] += abs((a + b - c) - exact)
    vals = [errs[r] for r in sorted(errs)]
    # averaged over instances the approximation improves with rank
    assert vals[-1] < vals[0]
    assert vals[-1] < 1e-8  # full rank is exact
    assert all(vals[i + 1] <= vals[i] * 1.5 for i in range(len(vals) - 1))


def test_mmd_detects_a_shift_and_respects_null():
    rng = np.random.default_rng(5)
    cfg = MmdConfig(nystrom_rank=64, n_permutations=120, rng_seed=9)
    X = rng.normal(size=(150, 2))
    Y = rng.normal(size=(150, 2))
    res_null = mmd_fuse_test(X, Y, cfg)
    assert res_null.p_value > 0.01
    Y_shift = rng.normal(size=(150, 2)) + 0.6
    res_alt = mmd_fuse_test(X, Y_shift, cfg)
    assert res_alt.p_value < 0.02
    assert res_alt.statistic > res_null.statistic


def test_mmd_config_validation():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(20, 1))
    with pytest.raises(ConfigError):
        MmdConfig(n_permutations=5)
    with pytest.raises(ConfigError):
        mmd_fuse_test(X, X, MmdConfig(nystrom_rank=100, n_permutations=30))


def test_mmd_null_pvalues_superuniform_quick():
    # small-scale exchangeability check; the full 500-repeat version runs in
    # the acceptance suite
    rng = np.random.default_rng(7)
    cfg0 = MmdConfig(nystrom_rank=40, n_permutations=40)
    hits = 0
    reps = 40
    for r in range(reps):
        Z = rng.normal(size=(80, 1))
        res = mmd_fuse_test(Z[:40], Z[40:], MmdConfig(
            nystrom_rank=40, n_permutations=40, rng_seed=r))
        hits += res.p_value <= 0.2
    # P(p <= 0.2) <= 0.2 + Monte Carlo slack
    assert hits / reps <= 0.2 + 3 * np.sqrt(0.2 * 0.8 / reps)


# ---------------------------------------------------------------------------
# Mahalanobis


def test_mahalanobis_zero_for_replicated_mean():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(200, 3))
    mean = X.mean(axis=0)
    Y = np.tile(mean, (20, 1))
    stat, p = mahalanobis_test(X, Y, n_bootstrap=50, rng_seed=1)
    assert stat < 1e-20
    assert p > 0.9


def test_mahalanobis_unit_expectation_1d():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(20000, 1))
    Y = rng.normal(size=(5000, 1))
    stat, _ = mahalanobis_test(X, Y, n_bootstrap=20, rng_seed=2)
    # mean squared distance to a standard normal fit is ~1 (chi-square moment)
    assert abs(stat - 1.0) < 5 * np.sqrt(2.0 / 5000)


def test_mahalanobis_power_decreases_with_dimension():
    rng = np.random.default_rng(10)
    shift = np.array([3.0, 3.0])
    powers = []
    for d in (2, 16, 64):
        hits = 0
        reps = 25
        for r in range(reps):
            X = rng.normal(size=(400, d))
            Y = rng.normal(size=(100, d))
            n_sig = 5
            Y[:n_sig, :2] += shift
            _, p = mahalanobis_test(X, Y, n_bootstrap=99, rng_seed=1000 + r)
            hits += p <= 0.05
        powers.append(hits / reps)
    assert powers[0] > powers[-1]
    assert powers[0] >= 0.5
    assert sorted(powers, reverse=True) == powers


def test_mahalanobis_singular_covariance_raises():
    X = np.zeros((30, 2))
    X[:, 0] = np.arange(30.0)  # second column constant
    with pytest.raises(DataError):
        mahalanobis_test(X, X[:5], ridge=0.0)


# ---------------------------------------------------------------------------
# Frechet distance


def test_frechet_identical_samples_is_zero():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(300, 4))
    assert frechet_distance(X, X) <= 1e-10


def test_frechet_analytic_1d_population():
    fd = frechet_distance_gaussians([0.0], [[1.0]], [3.0], [[4.0]])
    assert_allclose(fd, 10.0, atol=1e-10)


def test_frechet_sample_converges_to_population():
    rng = np.random.default_rng(12)
    errs = []
    for n in (200, 20000):
        X = rng.normal(0.0, 1.0, size=(n, 1))
        Y = rng.normal(3.0, 2.0, size=(n, 1))
        errs.append(abs(frechet_distance(X, Y) - 10.0))
    assert errs[1] < errs[0]
    assert errs[1] < 0.2


def test_frechet_matches_eigendecomposition_oracle():
    rng = np.random.default_rng(13)
    for _ in range(5):
        A = rng.normal(size=(6, 3))
        B = rng.normal(size=(6, 3))
        c1 = A.T @ A / 6 + 0.5 * np.eye(3)
        c2 = B.T @ B / 6 + 0.5 * np.eye(3)
        m1 = rng.normal(size=3)
        m2 = rng.normal(size=3)
        fd = frechet_distance_gaussians(m1, c1, m2, c2)
        # oracle: eigenvalues of the (non-symmetric) covariance product
        lam = np.linalg.eigvals(c1 @ c2)
        tr_root = np.sqrt(np.clip(lam.real, 0, None)).sum()
        oracle = (m1 - m2) @ (m1 - m2) + np.trace(c1) + np.trace(c2) - 2 * tr_root
        assert_allclose(fd, oracle, atol=1e-8)


def test_frechet_symmetry_and_validation():
    rng = np.random.default_rng(14)
    X = rng.normal(size=(500, 3))
    Y = rng.normal(size=(400, 3)) * 1.4 + 0.2
    assert abs(frechet_distance(X, Y) - frechet_distance(Y, X)) < 1e-10
    assert frechet_distance(X, Y) >= 0
    with pytest.raises(DataError):
        frechet_distance(X, rng.normal(size=(10, 2)))
    with pytest.raises(DataError):
        frechet_distance_gaussians([0.0], [[1.0]], [0.0, 1.0], np.eye(2))


def test_median_heuristic_grid():
    rng = np.random.default_rng(15)
    pts = rng.normal(size=(500, 2))
    bws = median_heuristic_bandwidths(pts, rng=0)
    assert bws.size == 5
    assert np.all(np.diff(bws) > 0)
    with pytest.raises(DataError):
        median_heuristic_bandwidths(np.zeros((10, 1)), rng=0)
