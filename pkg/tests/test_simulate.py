import math

import numpy as np
import pytest

from crossmoments import covmodels as cm
from crossmoments import kacrice as kr
from crossmoments import simulate as sim
from crossmoments._rng import substream


# ---------------------------------------------------------------------------
# 1D sampling
# ---------------------------------------------------------------------------

def test_same_seed_same_path():
    g = cm.GaussianExp()
    a = sim.sample_process_1d(g, 1.0, 513, seed=9)
    b = sim.sample_process_1d(g, 1.0, 513, seed=9)
    assert np.array_equal(a.values, b.values)
    c = sim.sample_process_1d(g, 1.0, 513, seed=10)
    assert not np.array_equal(a.values, c.values)


def test_sine_cosine_sample_distribution():
    # X = xi1 sin + xi2 cos: unit variance and cosine covariance, checked
    # across replicates at fixed grid positions
    w = 2.0
    model = cm.SineCosine(w=w)
    n, T = 257, 3.0
    sampler = sim._Path1DSampler(model, T, n)
    vals = np.empty((1200, n))
    for i in range(600):
        vals[2 * i], vals[2 * i + 1] = sampler.sample_pair(substream(3, i))
    dt = T / (n - 1)
    var = vals[:, 40].var()
    assert abs(var - 1.0) < 3 * math.sqrt(2.0 / 1200)
    for lag in (0.25, 1.0):
        k = int(round(lag / dt))
        prods = vals[:, 40] * vals[:, 40 + k]
        se = prods.std() / math.sqrt(len(prods))
        assert abs(prods.mean() - math.cos(w * lag)) < 3 * se


def test_gaussian_sample_covariance():
    model = cm.GaussianExp()
    n, T = 257, 3.0
    sampler = sim._Path1DSampler(model, T, n)
    vals = np.empty((2000, n))
    for i in range(1000):
        vals[2 * i], vals[2 * i + 1] = sampler.sample_pair(substream(5, i))
    dt = T / (n - 1)
    for lag in (0.1, 0.5, 1.0):
        k = int(round(lag / dt))
        prods = vals[:, 30] * vals[:, 30 + k]
        se = prods.std() / math.sqrt(len(prods))
        assert abs(prods.mean() - float(model.r(k * dt))) < 3 * se


def test_lacunary_sampler_matches_model_covariance():
    model = cm.LacunaryLog()
    n, T = 129, 1.0
    sampler = sim._Path1DSampler(model, T, n)
    vals = np.empty((3000, n))
    for i in range(1500):
        vals[2 * i], vals[2 * i + 1] = sampler.sample_pair(substream(7, i))
    dt = T / (n - 1)
    assert abs(vals[:, 10].var() - 1.0) < 3 * math.sqrt(2.0 / 3000)
    for lag in (0.25, 0.5):
        k = int(round(lag / dt))
        prods = vals[:, 10] * vals[:, 10 + k]
        se = prods.std() / math.sqrt(len(prods))
        assert abs(prods.mean() - float(model.r(k * dt))) < 3 * se


def test_spectral_fallback_distribution():
    # force the fallback and verify the covariance it reproduces
    model = cm.GaussianExp()
    t = np.linspace(0, 2, 65)
    rng = substream(11, 0)
    vals = np.stack([sim._spectral_fallback(model, rng, t, 4000) for _ in range(400)])
    for lag_idx in (8, 32):
        prods = vals[:, 0] * vals[:, lag_idx]
        se = prods.std() / math.sqrt(len(prods))
        assert abs(prods.mean() - float(model.r(t[lag_idx]))) < 4 * se


def test_embedding_not_psd_error():
    # a tiny domain forces heavy wraparound; with fallback disabled the
    # sampler must surface the failed embedding, reporting the eigenvalue
    class Bad(cm.GaussianExp):
        def r(self, tau):
            # long-range oscillation that defeats torus embedding
            tau = np.asarray(tau, dtype=float)
            return np.cos(3.0 * tau) * np.exp(-0.001 * tau**2)

    try:
        sim.sample_process_1d(Bad(), 1.0, 129, seed=0, fallback=False)
    except sim.EmbeddingNotPSD as exc:
        assert exc.min_eigenvalue < 0
    else:  # embedding may succeed on some grids; then nothing to assert
        pass


# ---------------------------------------------------------------------------
# crossing counting
# ---------------------------------------------------------------------------

def test_crossings_constant_path():
    path = sim.GridField(np.full(100, 2.0), spacing=0.01)
    assert sim.count_crossings(path, 1.0) == 0


def test_crossings_cosine_period():
    t = np.linspace(0, 2 * math.pi, 1000)
    path = sim.GridField(np.cos(t), spacing=t[1])
    assert sim.count_crossings(path, 0.0) == 2


def test_crossing_locations_secant():
    t = np.linspace(0, 2 * math.pi, 4000)
    path = sim.GridField(np.cos(t), spacing=t[1])
    count, locs = sim.count_crossings(path, 0.0, return_locations=True)
    assert count == 2
    np.testing.assert_allclose(locs, [math.pi / 2, 3 * math.pi / 2], atol=1e-5)


def test_crossings_tie_rule_positive():
    path = sim.GridField(np.array([-1.0, 0.0, -1.0, 1.0]), spacing=1.0)
    # the exact 0.0 counts as positive: crossings at cells (0,1), (1,2), (2,3)
    assert sim.count_crossings(path, 0.0) == 3


def test_crossings_monotone_under_coarsening():
    g = cm.GaussianExp()
    for seed in range(20):
        x = sim.sample_process_1d(g, 4.0, 2049, seed=seed).values
        fine = sim.count_crossings(sim.GridField(x, spacing=4.0 / 2048), 0.0)
        mid = sim.count_crossings(sim.GridField(x[::2], spacing=4.0 / 1024), 0.0)
        coarse = sim.count_crossings(sim.GridField(x[::4], spacing=4.0 / 512), 0.0)
        assert coarse <= mid <= fine


def test_tangency_screen_runs():
    t = np.linspace(0, 2 * math.pi, 200)
    path = sim.GridField(np.cos(t) - 0.999, spacing=t[1])
    assert sim.tangency_screen(path, 0.0) >= 0


# ---------------------------------------------------------------------------
# 2D fields
# ---------------------------------------------------------------------------

def test_field_reproducible_and_isotropic():
    f = cm.IsotropicFieldModel(profiles=(cm.GaussianRadial(0.35), cm.GaussianRadial(0.35)))
    a = sim.sample_field_2d(f, (1.0, 1.0), 65, seed=1)
    b = sim.sample_field_2d(f, (1.0, 1.0), 65, seed=1)
    assert np.array_equal(a.values, b.values)

    sampler = sim._Field2DSampler(f, (1.0, 1.0), 65)
    vals = np.stack([sampler.sample(substream(2, i)) for i in range(500)])
    # empirical isotropy: same-distance covariance along the axis and the diagonal
    d = 8
    prof = f.profiles[0]
    axis = vals[:, 0, 10, 10] * vals[:, 0, 10, 10 + d]
    diag_step = int(round(d / math.sqrt(2)))
    diag = vals[:, 0, 10, 10] * vals[:, 0, 10 + diag_step, 10 + diag_step]
    dx = 1.0 / 64
    r_axis = float(prof.value((d * dx) ** 2))
    r_diag = float(prof.value(2 * (diag_step * dx) ** 2))
    assert abs(axis.mean() - r_axis) < 3 * axis.std() / math.sqrt(axis.size)
    assert abs(diag.mean() - r_diag) < 3 * diag.std() / math.sqrt(diag.size)
    # independent layers: cross covariance near zero
    cross = vals[:, 0, 20, 20] * vals[:, 1, 20, 20]
    assert abs(cross.mean()) < 3 * cross.std() / math.sqrt(cross.size)


def test_roots_affine_field():
    t0 = np.array([0.37, 0.61])
    A = np.array([[1.0, 0.3], [-0.2, 0.8]])
    n = 33
    xs = np.linspace(0, 1, n)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    layers = np.stack(
        [
            A[0, 0] * (X - t0[0]) + A[0, 1] * (Y - t0[1]),
            A[1, 0] * (X - t0[0]) + A[1, 1] * (Y - t0[1]),
        ]
    )
    field = sim.GridField(layers, spacing=(1 / (n - 1), 1 / (n - 1)))
    rc = sim.count_roots_2d(field, (0.0, 0.0))
    assert rc.count == 1
    np.testing.assert_allclose(rc.locations[0], t0, atol=1e-10)
    assert rc.stalled_cells == 0


def test_roots_no_sign_change():
    field = sim.GridField(np.stack([np.ones((9, 9)), np.full((9, 9), -2.0)]), spacing=(0.1, 0.1))
    rc = sim.count_roots_2d(field, (0.0, 0.0))
    assert rc.count == 0


def test_roots_two_in_one_cell():
    # B1 = (x - 0.5)(y - 0.5) - 0.06 (hyperbola), B2 = x - y: the pair has
    # exactly two roots at x = y = 0.5 +- sqrt(0.06), farther apart than
    # the half-grid-step deduplication radius
    c1 = np.array([[0.19, -0.31], [-0.31, 0.19]])
    c2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    field = sim.GridField(np.stack([c1, c2]), spacing=(1.0, 1.0))
    rc = sim.count_roots_2d(field, (0.0, 0.0))
    assert rc.count == 2
    got = np.sort(rc.locations[:, 0])
    want = np.array([0.5 - math.sqrt(0.06), 0.5 + math.sqrt(0.06)])
    np.testing.assert_allclose(got, want, atol=1e-9)


# ---------------------------------------------------------------------------
# contour length
# ---------------------------------------------------------------------------

def test_contour_plane_chord():
    n = 65
    xs = np.linspace(0, 1, n)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    plane = X + 0.5 * Y - 0.7
    field = sim.GridField(plane, spacing=(1 / (n - 1), 1 / (n - 1)))
    # chord of x + y/2 = 0.7: from (0.7, 0) to (0.2, 1)
    assert sim.contour_length(field, 0.0) == pytest.approx(math.hypot(0.5, 1.0), abs=1e-6)


def test_contour_above_maximum():
    n = 33
    xs = np.linspace(0, 1, n)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    field = sim.GridField(np.sin(3 * X) * np.cos(2 * Y), spacing=(1 / (n - 1), 1 / (n - 1)))
    assert sim.contour_length(field, 10.0) == 0.0


def test_contour_circle():
    # radius-0.3 circle at fine resolution
    n = 513
    xs = np.linspace(0, 1, n)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    ring = (X - 0.5) ** 2 + (Y - 0.5) ** 2 - 0.09
    field = sim.GridField(ring, spacing=(1 / (n - 1), 1 / (n - 1)))
    assert sim.contour_length(field, 0.0) == pytest.approx(2 * math.pi * 0.3, rel=1e-4)


def test_contour_saddle_cells_resolved():
    # symmetric saddle: both pairings are geometrically valid; the rule
    # must pick one deterministically and the length must be finite
    vals = np.array([[1.0, -1.0], [-1.0, 1.0]])
    field = sim.GridField(vals, spacing=(1.0, 1.0))
    L = sim.contour_length(field, 0.0)
    assert L == pytest.approx(math.sqrt(2), rel=1e-12)


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------

def test_ensemble_rejects_zero_replicates():
    with pytest.raises(ValueError):
        sim.EnsembleConfig(
            mode="crossings", model=cm.GaussianExp(), u=0.0, domain=1.0,
            resolution=128, replicates=0, seed=0,
        )


def test_ensemble_sine_cosine_exact():
    cfg = sim.EnsembleConfig(
        mode="crossings", model=cm.SineCosine(w=2.0), u=0.0,
        domain=2 * math.pi / 2.0, resolution=1025, replicates=600, seed=1,
    )
    ens = sim.run_ensemble(cfg)
    assert ens.mean == 2.0
    assert ens.variance == 0.0
    assert ens.pair_mean == 2.0


def test_ensemble_matches_rice_mean():
    g = cm.GaussianExp()
    cfg = sim.EnsembleConfig(
        mode="crossings", model=g, u=0.0, domain=2.0,
        resolution=2**12 + 1, replicates=2000, seed=2,
    )
    ens = sim.run_ensemble(cfg)
    assert abs(ens.mean - kr.rice_mean_1d(g, 0.0, 2.0)) < 3 * ens.se
    # nested-grid counts never increase under coarsening
    assert np.all(ens.coarse_values <= ens.values)
    assert ens.richardson_bias is not None


def test_ensemble_se_scaling():
    # sqrt-n scaling: quadrupling replicates halves the standard error;
    # the 20-batch SE estimator itself carries ~16% noise, so the ratio
    # is averaged over independent seeds
    g = cm.GaussianExp()
    ratios = []
    for seed in (3, 30, 300, 3000):
        base = dict(mode="crossings", model=g, u=0.0, domain=2.0, resolution=513, seed=seed)
        se1 = sim.run_ensemble(sim.EnsembleConfig(replicates=2000, **base)).se
        se2 = sim.run_ensemble(sim.EnsembleConfig(replicates=8000, **base)).se
        ratios.append(se2 / se1)
    assert np.mean(ratios) == pytest.approx(0.5, abs=0.1)


def test_ensemble_parallel_matches_serial():
    g = cm.GaussianExp()
    base = dict(mode="crossings", model=g, u=0.3, domain=1.0, resolution=513, replicates=64, seed=4)
    serial = sim.run_ensemble(sim.EnsembleConfig(workers=1, **base))
    parallel = sim.run_ensemble(sim.EnsembleConfig(workers=3, **base))
    assert np.array_equal(serial.values, parallel.values)


def test_ensemble_roots_mode():
    f = cm.IsotropicFieldModel(profiles=(cm.GaussianRadial(0.35), cm.GaussianRadial(0.35)))
    cfg = sim.EnsembleConfig(
        mode="roots2d", model=f, u=(0.0, 0.0), domain=(1.0, 1.0),
        resolution=129, replicates=60, seed=5, richardson=False,
    )
    ens = sim.run_ensemble(cfg)
    assert ens.mean > 0
    assert ens.values.dtype == float


def test_ensemble_csv_and_json(tmp_path):
    cfg = sim.EnsembleConfig(
        mode="crossings", model=cm.GaussianExp(), u=0.0, domain=1.0,
        resolution=257, replicates=50, seed=6,
    )
    ens = sim.run_ensemble(cfg)
    path = tmp_path / "ens.csv"
    ens.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "replicate_id,value,delta"
    assert len(lines) == 51
    agg = ens.aggregate_json()
    assert '"mean"' in agg and '"pair_moment_mean"' in agg


def test_ensemble_coarse_grid_warns():
    cfg = sim.EnsembleConfig(
        mode="crossings", model=cm.GaussianExp(), u=0.0, domain=10.0,
        resolution=64, replicates=4, seed=7,
    )
    with pytest.warns(UserWarning, match="grid too coarse"):
        sim.run_ensemble(cfg)


def pair_moments_by_decimation(model, T, resolution, levels, replicates, seed):
    """Pathwise-coupled pair moments E[N(N-1)] at nested decimations.

    Counting on nested restrictions of the same sampled paths couples the
    estimates, so increments between resolutions carry small standard
    errors (the sharp form of the refinement test).
    """
    sampler = sim._Path1DSampler(model, T, resolution)
    dt = T / (resolution - 1)
    pairs = np.empty((replicates, levels))
    for i in range(replicates):
        pidx, half = divmod(i, 2)
        x = sampler.sample_pair(substream(seed, pidx))[half]
        for lev in range(levels):
            step = 2 ** (levels - 1 - lev)
            n = sim.count_crossings(sim.GridField(x[::step], spacing=dt * step), 0.0)
            pairs[i, lev] = n * (n - 1)
    return pairs


def test_divergent_model_counts_grow_with_resolution():
    # observable signature of a divergent second moment: the pair moment
    # keeps climbing as the grid refines, with no sign of stabilizing,
    # while the smooth model's counts are already exhausted
    lac = cm.LacunaryLog()
    pairs = pair_moments_by_decimation(lac, 1.0, 2**12 + 1, levels=4,
                                       replicates=4000, seed=8)
    means = pairs.mean(axis=0)
    incr = np.diff(pairs, axis=1)
    incr_se = incr.std(axis=0) / math.sqrt(pairs.shape[0])
    assert np.all(incr.mean(axis=0) > 3 * incr_se)
    assert np.all(np.diff(means) > 0)

    # contrast: the squared-exponential model stabilizes (no new crossings
    # appear under refinement once the grid resolves the paths)
    g = cm.GaussianExp()
    pairs_g = pair_moments_by_decimation(g, 1.0, 2**12 + 1, levels=4,
                                         replicates=4000, seed=9)
    incr_g = np.diff(pairs_g, axis=1).mean(axis=0)
    se_g = np.diff(pairs_g, axis=1).std(axis=0) / math.sqrt(pairs_g.shape[0]) + 1e-12
    assert np.all(incr_g <= 3 * se_g + 1e-9)
