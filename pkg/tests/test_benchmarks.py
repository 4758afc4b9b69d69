import numpy as np
import pytest
from numpy.testing import assert_allclose

from sparker.benchmarks import (
    BenchmarkSpec,
    _draw_counts,
    benchmark_by_name,
    benchmark_names,
    gen_exp1d,
    gen_gauss2d,
    gen_teacher1d,
    generate,
    load_feature_file,
    save_feature_file,
)
from sparker.errors import DataError


# ---------------------------------------------------------------------------
# registry and spec validation


def test_registry_covers_every_kind():
    for name in benchmark_names():
        spec = benchmark_by_name(name)
        assert isinstance(spec, BenchmarkSpec)


def test_table_parameters_for_named_benchmarks():
    bulk = benchmark_by_name("exp1d:bulk")
    assert bulk.signal_fraction == 4.5e-2
    extreme = benchmark_by_name("exp1d:extreme_tail")
    assert extreme.signal_fraction == 2.5e-3
    assert extreme.expected_background == 2000.0
    assert extreme.reference_size == 20000
    bump = benchmark_by_name("gauss2d:bulk_bump")
    assert bump.signal_fraction == 1e-2
    center = benchmark_by_name("gauss2d:center_bump")
    assert center.signal_fraction == 1e-3


def test_unknown_names_rejected():
    for bad in ("exp1d:blob", "exp3d:bulk", "no-colon"):
        with pytest.raises(DataError):
            benchmark_by_name(bad)
    with pytest.raises(DataError):
        BenchmarkSpec("exp1d", "bulk", -0.1)


# ---------------------------------------------------------------------------
# generators


def test_generators_are_seed_deterministic():
    for name in ("exp1d:extreme_tail", "gauss2d:smear", "teacher1d:narrow_bump"):
        r1, d1 = generate(name, rng_seed=123)
        r2, d2 = generate(name, rng_seed=123)
        assert np.array_equal(r1.points, r2.points)
        assert np.array_equal(d1.points, d2.points)
        r3, d3 = generate(name, rng_seed=124)
        assert not np.array_equal(d1.points, d3.points)


def test_exp1d_none_moment_check():
    spec = BenchmarkSpec("exp1d", "none", 0.0, expected_background=2000,
                         reference_size=4000)
    ref, dat = gen_exp1d(spec, rng_seed=5)
    n = dat.size
    assert abs(dat.points.mean() - 1.0) < 3.0 / np.sqrt(n)
    assert abs(ref.points.mean() - 1.0) < 3.0 / np.sqrt(ref.size)
    assert ref.weight == 0.5


def test_exp1d_signal_lands_at_the_bump():
    spec = BenchmarkSpec("exp1d", "extreme_tail", 0.1, expected_background=2000,
                         reference_size=2000)
    ref, dat = gen_exp1d(spec, rng_seed=7)
    # expected 200 signal points near x=9 where the background is ~0
    n_far = np.sum(dat.points > 8.0)
    assert 120 < n_far < 280


def test_poisson_counts_match_moments():
    # the injected signal count over many draws is Poisson with the nominal
    # mean and variance
    rng = np.random.default_rng(0)
    n_draws = 10_000
    lam_bkg, lam_sig = 200.0, 20.0
    sig = np.array([
        _draw_counts(lam_bkg, lam_sig, True, rng)[1] for _ in range(n_draws)
    ])
    se_mean = np.sqrt(lam_sig / n_draws)
    assert abs(sig.mean() - lam_sig) < 5 * se_mean
    # Var(sample variance) ~ (mu4 - var^2)/n; for Poisson mu4 ~ 3 lam^2 + lam
    se_var = np.sqrt((3 * lam_sig**2 + lam_sig - lam_sig**2) / n_draws)
    assert abs(sig.var(ddof=1) - lam_sig) < 5 * se_var


def test_fixed_counts_without_fluctuation():
    spec = BenchmarkSpec("exp1d", "none", 0.0, expected_background=500,
                         reference_size=100)
    _, dat = gen_exp1d(spec, rng_seed=1, poisson_fluctuate=False)
    assert dat.size == 500


def test_gauss2d_occupancy_roughly_quarter_each():
    spec = BenchmarkSpec("gauss2d", "none", 0.0, expected_background=2000,
                         reference_size=8000)
    ref, dat = gen_gauss2d(spec, rng_seed=3)
    # assign points to the nearest corner
    corners = np.array([[-8, -8], [-8, 8], [8, -8], [8, 8]], dtype=float)
    d2 = ((ref.points[:, None, :] - corners[None]) ** 2).sum(-1)
    counts = np.bincount(d2.argmin(1), minlength=4)
    n = ref.size
    # multinomial 3 sigma around n/4
    tol = 3 * np.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(counts - n / 4) < tol)


def test_gauss2d_distortions_preserve_expected_counts():
    for kind in ("smear", "squeeze"):
        spec = BenchmarkSpec("gauss2d", kind, 0.0, expected_background=1500,
                             reference_size=100)
        _, dat = gen_gauss2d(spec, rng_seed=2, poisson_fluctuate=False)
        assert dat.size == 1500


def test_gauss2d_smear_widens_bottom_left():
    spec = BenchmarkSpec("gauss2d", "smear", 0.0, expected_background=20000,
                         reference_size=100)
    _, dat = gen_gauss2d(spec, rng_seed=11, poisson_fluctuate=False)
    ref_spec = BenchmarkSpec("gauss2d", "none", 0.0, expected_background=20000,
                             reference_size=100)
    _, base = gen_gauss2d(ref_spec, rng_seed=12, poisson_fluctuate=False)

    def bl_std(ps):
        pts = ps.points
        mask = (pts[:, 0] < 0) & (pts[:, 1] < 0)
        sel = pts[mask] - np.array([-8.0, -8.0])
        return sel.std()

    assert bl_std(dat) > bl_std(base) * 1.05


def test_teacher_point_anomalies_present():
    ref, dat = gen_teacher1d("single_point", rng_seed=4)
    assert np.sum(np.isclose(dat.points[:, 0], -10.0)) == 1
    ref, dat = gen_teacher1d("two_points", rng_seed=4)
    assert np.any(np.isclose(dat.points[:, 0], -10.0))
    assert np.any(np.isclose(dat.points[:, 0], -5.0))
    # reference is symmetric about the origin within statistical tolerance
    m = ref.points.mean()
    assert abs(m) < 4 * ref.points.std() / np.sqrt(ref.size)


def test_teacher_infinite_statistics_grid():
    ref, dat = gen_teacher1d("two_points", infinite=True,
                             expected_background=1000.0, grid_points=512)
    assert ref.size == 512
    assert dat.size == 514
    assert_allclose(ref.point_weights.sum(), 1000.0, rtol=1e-12)
    # grid weights are identical on the shared background part
    assert_allclose(dat.point_weights[:512], ref.point_weights)
    assert_allclose(dat.point_weights[512:], [1.0, 1.0])
    # density weights peak near the mixture centers
    peak = ref.points[np.argmax(ref.point_weights), 0]
    assert min(abs(peak - 3), abs(peak + 3)) < 0.1


def test_narrow_bump_places_signal_near_minus_five():
    _, dat = gen_teacher1d("narrow_bump", rng_seed=9, n_signal=15,
                           expected_background=100, reference_size=500)
    sel = dat.points[np.abs(dat.points[:, 0] + 5.0) < 0.5]
    assert sel.shape[0] >= 15


# ---------------------------------------------------------------------------
# feature files


def test_feature_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(40, 3)) * 1e3
    path = tmp_path / "points.csv"
    save_feature_file(path, pts, comments=["round-trip fixture"])
    loaded = load_feature_file(path)
    assert np.array_equal(loaded.points, pts)


def test_feature_file_small_and_headerless(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("1.0,2.0\n3.0,4.0\n5.5,6.5\n")
    ps = load_feature_file(path)
    assert ps.size == 3 and ps.dim == 2
    # whitespace-separated variant
    path.write_text("1.0 2.0\n3.0 4.0\n")
    ps = load_feature_file(path, expected_dim=2)
    assert ps.size == 2


def test_feature_file_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x0,x1\n1.0,2.0\n3.0,nan\n")
    with pytest.raises(DataError, match="line 3"):
        load_feature_file(path)
    path.write_text("1.0,2.0\n3.0\n")
    with pytest.raises(DataError, match="line 2"):
        load_feature_file(path)
    path.write_text("1.0,2.0\nfoo,bar\n")
    with pytest.raises(DataError, match="non-numeric"):
        load_feature_file(path)
    path.write_text("1.0,2.0\n")
    with pytest.raises(DataError, match="dimension"):
        load_feature_file(path, expected_dim=5)
    with pytest.raises(DataError, match="cannot open"):
        load_feature_file(tmp_path / "missing.csv")
    path.write_text("# only comments\n")
    with pytest.raises(DataError, match="no data"):
        load_feature_file(path)
