import numpy as np
import pytest

from stfield import (
    DiagnosticError,
    PreconditionError,
    ShapeError,
    StationDataset,
    VariogramSurface,
    empirical_semivariogram,
    flatness_ratio,
    nugget_and_sill_summary,
    residual_dataset,
)


def make_dataset(values, coords=None, ids=None):
    values = np.asarray(values, dtype=float)
    s, t = values.shape
    if coords is None:
        coords = np.random.default_rng(99).uniform(0, 10, size=(s, 2))
    if ids is None:
        ids = [f"s{i:03d}" for i in range(s)]
    return StationDataset(ids, coords, ("x", "y"), np.arange(t), values)


def bin_of(value, bins):
    for b, (c, tol) in enumerate(bins):
        if tol == 0:
            if value == c:
                return b
        else:
            lo, hi = c - tol, c + tol
            if lo < value <= hi or (b == 0 and value == lo):
                return b
    return -1


def quadruple_loop_oracle(ds, space_bins, time_lags):
    """Exhaustive enumeration of ordered station pairs x ordered time pairs,
    skipping identical space-time points."""
    s, t = ds.values.shape
    xy = ds.coords[:, :2]
    z = ds.values
    sums = np.zeros((len(space_bins), len(time_lags)))
    counts = np.zeros((len(space_bins), len(time_lags)), dtype=np.int64)
    for i in range(s):
        for k in range(s):
            d = float(np.sqrt(((xy[i] - xy[k]) ** 2).sum()))
            b = bin_of(d, space_bins)
            if b < 0:
                continue
            for j in range(t):
                for l in range(t):
                    if i == k and j == l:
                        continue
                    c = bin_of(float(abs(j - l)), time_lags)
                    if c < 0:
                        continue
                    sums[b, c] += (z[i, j] - z[k, l]) ** 2
                    counts[b, c] += 1
    gamma = np.full(sums.shape, np.nan)
    filled = counts > 0
    gamma[filled] = sums[filled] / (2.0 * counts[filled])
    return gamma, counts


def test_constant_field_gives_zero():
    ds = make_dataset(np.full((6, 8), 4.5))
    v = empirical_semivariogram(ds)
    assert np.all(v.gamma[v.nonempty] <= 1e-12)


def test_matches_quadruple_loop_oracle():
    rng = np.random.default_rng(0)
    for trial in range(6):
        s = int(rng.integers(3, 6))
        t = int(rng.integers(3, 6))
        ds = make_dataset(rng.normal(size=(s, t)),
                          coords=rng.uniform(0, 5, size=(s, 2)))
        v = empirical_semivariogram(ds, n_space_bins=4, max_time_lag=t - 1)
        gamma_ref, counts_ref = quadruple_loop_oracle(ds, v.space_bins, v.time_lags)
        assert np.array_equal(v.pair_counts, counts_ref)
        filled = counts_ref > 0
        assert np.array_equal(v.nonempty, filled)
        assert np.abs(v.gamma[filled] - gamma_ref[filled]).max() < 1e-12


def test_matches_oracle_with_user_bins_and_colocated_stations():
    rng = np.random.default_rng(1)
    coords = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [2.0, 2.0]])
    ds = make_dataset(rng.normal(size=(4, 4)), coords=coords)
    space_bins = [(0.0, 0.0), (1.0, 0.5), (2.5, 1.0)]
    time_lags = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]
    v = empirical_semivariogram(ds, space_bins, time_lags)
    gamma_ref, counts_ref = quadruple_loop_oracle(ds, v.space_bins, v.time_lags)
    filled = counts_ref > 0
    assert np.array_equal(v.pair_counts, counts_ref)
    assert np.abs(v.gamma[filled] - gamma_ref[filled]).max() < 1e-12
    # co-located distinct stations contribute to the h=0, tau=0 cell
    assert v.pair_counts[0, 0] > 0


def test_h0_tau0_empty_without_colocated_stations():
    ds = make_dataset(np.random.default_rng(2).normal(size=(3, 4)),
                      coords=np.array([[0, 0], [1, 0], [0, 1]], dtype=float))
    v = empirical_semivariogram(ds, [(0.0, 0.0), (1.0, 0.5)],
                                [(0.0, 0.0), (1.0, 0.0)])
    # only identical space-time points would fall there: flagged empty
    assert v.pair_counts[0, 0] == 0
    assert np.isnan(v.gamma[0, 0])
    # same-station pairs at positive lag fill the h=0, tau=1 cell
    assert v.pair_counts[0, 1] > 0


def test_iid_noise_is_pure_nugget():
    rng = np.random.default_rng(3)
    sigma = 1.7
    ds = make_dataset(rng.normal(scale=sigma, size=(200, 200)),
                      coords=rng.uniform(0, 100, size=(200, 2)))
    v = empirical_semivariogram(ds, max_time_lag=8)
    vals = v.gamma[v.nonempty]
    assert np.all(np.abs(vals - sigma ** 2) < 0.1 * sigma ** 2)


def test_boundary_distance_belongs_to_lower_bin():
    coords = np.array([[0.0, 0.0], [1.0, 0.0]])
    ds = make_dataset(np.random.default_rng(4).normal(size=(2, 3)), coords=coords)
    v = empirical_semivariogram(ds, [(0.5, 0.5), (1.5, 0.5)], [(0.0, 0.0)])
    assert v.pair_counts[0, 0] == 2 * 3  # both ordered pairs, three times
    assert v.pair_counts[1, 0] == 0


def test_preconditions():
    with pytest.raises(PreconditionError):
        empirical_semivariogram(make_dataset(np.zeros((1, 5))))
    missing = np.zeros((4, 4))
    missing[0, 0] = np.nan
    with pytest.raises(PreconditionError):
        empirical_semivariogram(make_dataset(missing))


def test_subsampling_records_metadata_and_stays_deterministic():
    rng = np.random.default_rng(5)
    ds = make_dataset(rng.normal(size=(40, 30)))
    a = empirical_semivariogram(ds, max_time_lag=4, max_station_pairs=100, seed=7)
    b = empirical_semivariogram(ds, max_time_lag=4, max_station_pairs=100, seed=7)
    full = empirical_semivariogram(ds, max_time_lag=4)
    assert a.subsample == {"seed": 7, "max_station_pairs": 100}
    assert np.array_equal(a.pair_counts, b.pair_counts)
    assert a.pair_counts.sum() < full.pair_counts.sum()


# ---------------------------------------------------------------------------
# invariances
# ---------------------------------------------------------------------------

def test_invariant_to_global_constant():
    rng = np.random.default_rng(6)
    ds = make_dataset(rng.normal(size=(8, 10)))
    shifted = make_dataset(ds.values + 1234.5, coords=ds.coords)
    a = empirical_semivariogram(ds, max_time_lag=5)
    b = empirical_semivariogram(shifted, space_bins=a.space_bins,
                                time_lags=a.time_lags)
    assert np.allclose(a.gamma[a.nonempty], b.gamma[b.nonempty],
                       rtol=1e-7, atol=1e-9)


def test_scaling_scales_gamma_quadratically():
    rng = np.random.default_rng(7)
    ds = make_dataset(rng.normal(size=(7, 9)))
    scaled = make_dataset(ds.values * 3.0, coords=ds.coords)
    a = empirical_semivariogram(ds, max_time_lag=4)
    b = empirical_semivariogram(scaled, space_bins=a.space_bins,
                                time_lags=a.time_lags)
    assert np.allclose(b.gamma[b.nonempty], 9.0 * a.gamma[a.nonempty], rtol=1e-12)


def test_station_relabeling_leaves_surface_unchanged():
    rng = np.random.default_rng(8)
    ds = make_dataset(rng.normal(size=(9, 6)))
    perm = rng.permutation(9)
    shuffled = ds.take(perm)
    a = empirical_semivariogram(ds, max_time_lag=3)
    b = empirical_semivariogram(shuffled, space_bins=a.space_bins,
                                time_lags=a.time_lags)
    assert np.array_equal(a.pair_counts, b.pair_counts)
    assert np.allclose(a.gamma[a.nonempty], b.gamma[b.nonempty], rtol=1e-12)


# ---------------------------------------------------------------------------
# residual_dataset
# ---------------------------------------------------------------------------

def test_residuals_perfect_predictions():
    ds = make_dataset(np.random.default_rng(9).normal(size=(5, 6)))
    res = residual_dataset(ds, ds.values)
    assert np.array_equal(res.values, np.zeros((5, 6)))


def test_residuals_zero_predictions():
    ds = make_dataset(np.random.default_rng(10).normal(size=(5, 6)))
    res = residual_dataset(ds, np.zeros((5, 6)))
    assert np.array_equal(res.values, ds.values)


def test_residuals_match_elementwise_subtraction():
    rng = np.random.default_rng(11)
    ds = make_dataset(rng.normal(size=(6, 4)))
    pred = rng.normal(size=(6, 4))
    res = residual_dataset(ds, pred)
    expected = np.array([[ds.values[i, j] - pred[i, j] for j in range(4)]
                         for i in range(6)])
    assert np.array_equal(res.values, expected)
    assert res.station_ids == ds.station_ids
    with pytest.raises(ShapeError):
        residual_dataset(ds, np.zeros((3, 4)))


# ---------------------------------------------------------------------------
# nugget / sill / flatness
# ---------------------------------------------------------------------------

def surface(gamma, counts=None, h_centers=None, t_centers=None):
    gamma = np.asarray(gamma, dtype=float)
    nh, nc = gamma.shape
    if counts is None:
        counts = np.where(np.isnan(gamma), 0, 1).astype(np.int64)
    h_centers = h_centers or [1.0 + i for i in range(nh)]
    t_centers = t_centers or list(range(nc))
    return VariogramSurface(
        space_bins=tuple((h, 0.5) for h in h_centers),
        time_lags=tuple((float(t), 0.0) for t in t_centers),
        gamma=gamma, pair_counts=np.asarray(counts, dtype=np.int64),
    )


def test_pure_nugget_summary():
    v = surface(np.full((4, 3), 2.89))
    summary = nugget_and_sill_summary(v)
    assert summary.nugget == pytest.approx(2.89)
    assert summary.sill == pytest.approx(2.89)


def test_monotone_surface_sill_is_plateau_mean():
    # gamma rises with h then flattens at 5.0 for the far cells
    gamma = np.array([
        [0.5, 0.6],
        [2.0, 2.5],
        [4.0, 4.5],
        [5.0, 5.0],
    ])
    v = surface(gamma)
    summary = nugget_and_sill_summary(v)
    assert summary.nugget == pytest.approx(0.5)
    # largest-lag quartile of the 8 nonempty cells = 2 farthest cells
    assert summary.sill == pytest.approx(np.mean([4.5, 5.0]))
    assert summary.nugget_cell == (1.0, 0.0)


def test_zero_surface_summary():
    v = surface(np.zeros((3, 2)))
    summary = nugget_and_sill_summary(v)
    assert summary.nugget == 0.0
    assert summary.sill == 0.0


def test_summary_requires_nonempty_cell():
    v = surface(np.full((2, 2), np.nan))
    with pytest.raises(DiagnosticError):
        nugget_and_sill_summary(v)


def test_flatness_ratio():
    gamma = np.array([[1.0, 1.2], [1.1, 1.3], [1.2, 1.4]])
    v = surface(gamma)
    assert flatness_ratio(v) == pytest.approx(1.4)
    assert flatness_ratio(v, require_positive_tau=True) == pytest.approx(1.4 / 1.2)
    flat = surface(np.zeros((2, 2)))
    assert flatness_ratio(flat) == 1.0


def test_variogram_csv_format(tmp_path):
    from stfield import save_variogram_csv

    gamma = np.array([[0.5, np.nan], [1.5, 2.5]])
    counts = np.array([[4, 0], [6, 8]], dtype=np.int64)
    v = surface(gamma, counts=counts, h_centers=[1.0, 2.0], t_centers=[0, 1])
    csv_path = tmp_path / "v.csv"
    meta_path = tmp_path / "v.meta.json"
    save_variogram_csv(v, csv_path, meta_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "h_center,tau_center,gamma,pairs"
    assert lines[1] == "1.0,0.0,0.5,4"
    assert lines[2] == "1.0,1.0,,0"  # empty cell: blank gamma, zero pairs
    assert lines[4] == "2.0,1.0,2.5,8"
    import json
    meta = json.loads(meta_path.read_text())
    assert meta["space_bins"] == [[1.0, 0.5], [2.0, 0.5]]
    assert meta["subsample"] is None
