import numpy as np
import pytest

from stfield import (
    CapabilityError,
    CenteredDataset,
    ConfigurationError,
    GridSpec,
    GrfSampler,
    ar1_series,
    decompose,
    gaussian_random_field,
    sample_stations,
    synthesize,
)


def lag1_autocorr(x):
    x = x - x.mean()
    return float((x[:-1] * x[1:]).mean() / (x * x).mean())


# ---------------------------------------------------------------------------
# gaussian_random_field
# ---------------------------------------------------------------------------

def test_grf_white_noise_limit():
    grid = GridSpec(nx=100, ny=100)
    field = gaussian_random_field(grid, length_scale=0.01, seed=0)
    rows = field.ravel()
    r = lag1_autocorr(rows)
    assert abs(r) < 0.05


def test_grf_monte_carlo_covariance_matches_kernel():
    # 32x32 grid, length scale 3 cells: ensemble covariance at lag d should
    # track exp(-d^2/18) for d <= 6 within +-0.05 over 200 seeds.
    grid = GridSpec(nx=32, ny=32)
    sampler = GrfSampler(grid, length_scale=3.0)
    n_seeds = 200
    cov = np.zeros(7)
    for seed in range(n_seeds):
        f = sampler.sample(seed)
        for d in range(7):
            if d == 0:
                cov[d] += (f * f).mean()
            else:
                cov[d] += (f[:, :-d] * f[:, d:]).mean()
    cov /= n_seeds
    expected = np.exp(-np.arange(7) ** 2 / 18.0)
    assert np.all(np.abs(cov - expected) < 0.05)


def test_grf_deterministic_per_seed():
    grid = GridSpec(nx=12, ny=9)
    a = gaussian_random_field(grid, length_scale=2.0, seed=7)
    b = gaussian_random_field(grid, length_scale=2.0, seed=7)
    c = gaussian_random_field(grid, length_scale=2.0, seed=8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == (9, 12)


def test_grf_marginal_moments():
    # Per-cell mean within 0.1 of 0 and variance within 0.1 of 1; 1500 seeds
    # keep the Monte Carlo error well inside the tolerance.
    grid = GridSpec(nx=8, ny=8)
    sampler = GrfSampler(grid, length_scale=2.0)
    samples = np.stack([sampler.sample(s) for s in range(1500)])
    means = samples.mean(axis=0)
    variances = samples.var(axis=0)
    assert np.abs(means).max() < 0.1
    assert np.abs(variances - 1.0).max() < 0.1


def test_grf_spectral_matches_kernel_too():
    # Force the circulant-embedding path on a small grid and check the
    # ensemble covariance against the kernel as well.
    grid = GridSpec(nx=24, ny=16)
    sampler = GrfSampler(grid, length_scale=2.0, method="spectral")
    n_seeds = 300
    cov = np.zeros(5)
    for seed in range(n_seeds):
        f = sampler.sample(seed)
        for d in range(5):
            if d == 0:
                cov[d] += (f * f).mean()
            else:
                cov[d] += (f[:, :-d] * f[:, d:]).mean()
    cov /= n_seeds
    expected = np.exp(-np.arange(5) ** 2 / 8.0)
    assert np.all(np.abs(cov - expected) < 0.06)


def test_grf_cholesky_capability_error():
    grid = GridSpec(nx=100, ny=100)
    with pytest.raises(CapabilityError, match="spectral"):
        GrfSampler(grid, length_scale=3.0, method="cholesky")


def test_grf_rejects_bad_length_scale():
    with pytest.raises(ConfigurationError):
        GrfSampler(GridSpec(nx=4, ny=4), length_scale=0.0)


# ---------------------------------------------------------------------------
# ar1_series
# ---------------------------------------------------------------------------

def test_ar1_phi_zero_is_white():
    y = ar1_series(100_000, phi=0.0, innovation_sd=1.0, seed=1)
    assert abs(lag1_autocorr(y)) < 0.01


def test_ar1_phi_09_autocorrelation():
    y = ar1_series(100_000, phi=0.9, innovation_sd=1.0, seed=2)
    assert abs(lag1_autocorr(y) - 0.9) < 0.02


def test_ar1_benchmark_length():
    y = ar1_series(1080, phi=0.8, innovation_sd=1.0, seed=3)
    assert y.shape == (1080,)


def test_ar1_stationary_initialization():
    # First-sample variance should match innovation_sd^2 / (1 - phi^2).
    phi, sd = 0.7, 2.0
    first = np.array([ar1_series(2, phi, sd, seed)[0] for seed in range(4000)])
    target = sd * sd / (1 - phi * phi)
    assert first.var() == pytest.approx(target, rel=0.1)


def test_ar1_rejects_nonstationary():
    with pytest.raises(ConfigurationError, match="nonstationary"):
        ar1_series(10, phi=1.0, innovation_sd=1.0, seed=0)
    with pytest.raises(ConfigurationError):
        ar1_series(10, phi=-1.2, innovation_sd=1.0, seed=0)


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------

def test_synthesize_noise_free_rank_bound():
    grid = GridSpec(nx=16, ny=12)
    truth = synthesize(grid, n_components=20, t_len=64, noise_ratio=0.0, seed=4)
    values = truth.values
    cd = CenteredDataset(values - values.mean(axis=0), values.mean(axis=0))
    sv = decompose(cd).singular_values
    assert np.all(sv[20:] < 1e-10 * sv[0])


def test_noise_free_sample_reconstructs_from_20_components():
    from stfield import reconstruct, truncate

    grid = GridSpec(nx=16, ny=12)
    truth = synthesize(grid, n_components=20, t_len=64, noise_ratio=0.0, seed=13)
    tr, _, _ = sample_stations(truth, 60, 10, 10, seed=14)
    mean = tr.values.mean(axis=0)
    tb = truncate(decompose(CenteredDataset(tr.values - mean, mean)), k=20)
    recon = reconstruct(tb.spatial_coeffs, tb, add_mean=True)
    scale = np.abs(tr.values).max()
    assert np.abs(recon - tr.values).max() < 1e-6 * scale


def test_synthesize_noise_variance_ratio():
    grid = GridSpec(nx=20, ny=15)
    truth = synthesize(grid, n_components=20, t_len=128, noise_ratio=0.10, seed=5)
    clean = truth.noise_free()
    noise = truth.values - clean
    ratio = noise.var() / clean.var()
    assert ratio == pytest.approx(0.01, abs=0.002)


def test_synthesize_deterministic():
    grid = GridSpec(nx=10, ny=10)
    a = synthesize(grid, n_components=5, t_len=32, seed=6)
    b = synthesize(grid, n_components=5, t_len=32, seed=6)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.fields, b.fields)
    assert np.array_equal(a.series, b.series)


def test_synthesize_shapes():
    grid = GridSpec(nx=10, ny=6)
    truth = synthesize(grid, n_components=4, t_len=17, seed=7)
    assert truth.fields.shape == (4, 6, 10)
    assert truth.series.shape == (4, 17)
    assert truth.values.shape == (60, 17)
    assert truth.noise_free().shape == (60, 17)


# ---------------------------------------------------------------------------
# sample_stations
# ---------------------------------------------------------------------------

def test_sample_stations_disjoint_and_deterministic():
    grid = GridSpec(nx=20, ny=12)
    truth = synthesize(grid, n_components=3, t_len=16, seed=8)
    tr, va, te = sample_stations(truth, 30, 10, 10, seed=9)
    tr2, va2, te2 = sample_stations(truth, 30, 10, 10, seed=9)
    ids = [set(d.station_ids) for d in (tr, va, te)]
    assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
    assert (tr.n_stations, va.n_stations, te.n_stations) == (30, 10, 10)
    assert tr.station_ids == tr2.station_ids
    assert np.array_equal(te.values, te2.values)
    assert tr.covariate_names == ("x", "y")


def test_sample_stations_values_come_from_grid_cells():
    grid = GridSpec(nx=8, ny=5, cell_size=2.0, origin=(1.0, -3.0))
    truth = synthesize(grid, n_components=2, t_len=6, seed=10)
    tr, _, _ = sample_stations(truth, 10, 3, 3, seed=11)
    coords = grid.cell_coords()
    for row, sid in enumerate(tr.station_ids):
        cell = int(sid[1:])
        assert np.array_equal(tr.coords[row], coords[cell])
        assert np.array_equal(tr.values[row], truth.values[cell])


def test_sample_stations_errors():
    grid = GridSpec(nx=6, ny=6)
    truth = synthesize(grid, n_components=2, t_len=4, seed=12)
    with pytest.raises(ConfigurationError):
        sample_stations(truth, 36, 0, 0, seed=0)
    with pytest.raises(ConfigurationError):
        sample_stations(truth, 30, 5, 5, seed=0)


def test_benchmark_grid_holds_full_sampling():
    # The benchmark's 139x88 grid holds 2000/1000/1000 disjoint stations.
    grid = GridSpec(nx=139, ny=88)
    assert grid.n_cells == 12232
    assert 2000 + 1000 + 1000 <= grid.n_cells


def test_grid_spec_validation():
    with pytest.raises(ConfigurationError):
        GridSpec(nx=0, ny=4)
    with pytest.raises(ConfigurationError):
        GridSpec(nx=4, ny=4, cell_size=0.0)
    from stfield import ShapeError
    with pytest.raises(ShapeError):
        GridSpec(nx=2, ny=2, covariates=np.zeros((3, 1)),
                 covariate_names=("alt",))


def test_grid_from_cells_roundtrip_and_reordering():
    from stfield.simulate import grid_from_cells

    grid = GridSpec(nx=5, ny=4, cell_size=2.5, origin=(10.0, -3.0))
    cells = grid.cell_coords()
    alt = np.arange(grid.n_cells, dtype=float)[:, None]
    rows = np.column_stack([cells, alt])
    perm = np.random.default_rng(0).permutation(grid.n_cells)
    rebuilt = grid_from_cells(rows[perm], ("x", "y", "alt"))
    assert (rebuilt.nx, rebuilt.ny) == (5, 4)
    assert rebuilt.cell_size == 2.5
    assert rebuilt.origin == (10.0, -3.0)
    # covariates land back in cell order no matter the row order
    assert np.array_equal(rebuilt.covariates[:, 0], alt[:, 0])
    assert rebuilt.covariate_header() == ("x", "y", "alt")


def test_grid_from_cells_rejects_bad_lattices():
    from stfield.simulate import grid_from_cells

    with pytest.raises(ConfigurationError, match="lattice"):
        grid_from_cells(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), ("x", "y"))
    ragged = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0],
                       [0.0, 1.0], [1.0, 1.0], [3.0, 1.0]])
    with pytest.raises(ConfigurationError, match="spacing"):
        grid_from_cells(ragged, ("x", "y"))
    rect = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 3.0], [1.0, 3.0]])
    with pytest.raises(ConfigurationError, match="square"):
        grid_from_cells(rect, ("x", "y"))


def test_sample_stations_carries_grid_covariates():
    alt = np.linspace(0, 100, 6 * 5)[:, None]
    grid = GridSpec(nx=6, ny=5, covariates=alt, covariate_names=("alt",))
    truth = synthesize(grid, n_components=2, t_len=8, seed=15)
    tr, _, _ = sample_stations(truth, 10, 3, 3, seed=16)
    assert tr.covariate_names == ("x", "y", "alt")
    assert tr.coords.shape == (10, 3)
    cell = int(tr.station_ids[0][1:])
    assert tr.coords[0, 2] == alt[cell, 0]
