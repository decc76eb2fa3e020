"""Empirical isotropic spatio-temporal semivariograms.

For a spatial-lag bin and a temporal-lag bin, gamma is half the average of
[Z(s_i, t_j) - Z(s_k, t_l)]^2 over every ordered station pair whose distance
falls in the spatial bin crossed with every ordered time pair whose lag falls
in the temporal bin. Identical space-time points (same station, same time)
are excluded from the counts; same-station pairs at positive lag and
co-located distinct stations are included. Cells that accumulate no pairs are
flagged empty (NaN), not zero.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import StationDataset
from .errors import DiagnosticError, PreconditionError, ShapeError

DEFAULT_SPACE_BINS = 15
DEFAULT_MAX_TIME_LAG = 12


@dataclass
class VariogramSurface:
    """Binned semivariogram values with the pair counts that produced them.

    space_bins / time_lags: (center, half-width tolerance) per bin; temporal
        lags are counted in time steps (the axis is regular). A value belongs
        to the first bin whose interval contains it, intervals are
        (center-tol, center+tol] with the first bin closed on the left.
    gamma: (n_space, n_time) values, NaN where no pairs fell.
    pair_counts: ordered station-pair x time-pair combinations accumulated.
    """

    space_bins: tuple
    time_lags: tuple
    gamma: np.ndarray
    pair_counts: np.ndarray
    subsample: dict | None = None

    @property
    def nonempty(self) -> np.ndarray:
        return self.pair_counts > 0


def _bin_index(values: np.ndarray, bins) -> np.ndarray:
    """First matching bin per value, -1 where none matches."""
    out = np.full(values.shape, -1, dtype=np.int64)
    unassigned = np.ones(values.shape, dtype=bool)
    for b, (center, tol) in enumerate(bins):
        if tol == 0:
            inside = values == center
        else:
            lo, hi = center - tol, center + tol
            inside = (values > lo) & (values <= hi)
            if b == 0:
                inside |= values == lo
        take = inside & unassigned
        out[take] = b
        unassigned &= ~take
    return out


def _default_space_bins(dist: np.ndarray, n_bins: int):
    h_max = float(dist.max()) / 2.0
    if h_max == 0.0:
        return ((0.0, 0.0),)
    width = h_max / n_bins
    return tuple((width * (i + 0.5), width / 2.0) for i in range(n_bins))


def _default_time_lags(n_times: int, max_lag: int | None):
    if max_lag is None:
        max_lag = min(n_times - 1, DEFAULT_MAX_TIME_LAG)
    max_lag = min(int(max_lag), n_times - 1)
    return tuple((float(tau), 0.0) for tau in range(max_lag + 1))


def _lag_matrix(values: np.ndarray, tau: int) -> np.ndarray:
    """M[i, k] = sum_j (Z[i, j] - Z[k, j+tau])^2 via the expansion trick."""
    a = values[:, : values.shape[1] - tau] if tau else values
    b = values[:, tau:] if tau else values
    sq_a = (a * a).sum(axis=1)
    sq_b = (b * b).sum(axis=1)
    return sq_a[:, None] + sq_b[None, :] - 2.0 * (a @ b.T)


def empirical_semivariogram(ds: StationDataset, space_bins=None, time_lags=None, *,
                            n_space_bins: int = DEFAULT_SPACE_BINS,
                            max_time_lag: int | None = None,
                            max_station_pairs: int | None = None,
                            seed=None) -> VariogramSurface:
    """Binned empirical semivariogram of a complete dataset.

    Default binning: `n_space_bins` equal-width spatial bins up to half the
    maximum pairwise distance, and exact integer time lags 0..max_time_lag.
    `max_station_pairs` optionally subsamples the distinct station pairs
    (uniformly, by `seed`) for large networks; same-station pairs are always
    kept so the pure-time column stays exact.
    """
    if ds.n_stations < 2:
        raise PreconditionError("semivariogram needs at least 2 stations")
    if ds.n_times < 2:
        raise PreconditionError("semivariogram needs at least 2 time steps")
    if ds.has_missing:
        raise PreconditionError("semivariogram requires a complete dataset; impute first")

    xy = ds.coords[:, :2]
    dist = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2))
    np.fill_diagonal(dist, 0.0)

    if space_bins is None:
        space_bins = _default_space_bins(dist, n_space_bins)
    else:
        space_bins = tuple((float(c), float(t)) for c, t in space_bins)
    if time_lags is None:
        time_lags = _default_time_lags(ds.n_times, max_time_lag)
    else:
        time_lags = tuple((float(c), float(t)) for c, t in time_lags)

    s, t = ds.n_stations, ds.n_times
    pair_mask = np.ones((s, s), dtype=bool)
    subsample = None
    n_distinct = s * (s - 1) // 2
    if max_station_pairs is not None and max_station_pairs < n_distinct:
        if seed is None:
            seed = 0  # subsampling must stay reproducible by default
        iu, ku = np.triu_indices(s, k=1)
        keep = np.random.default_rng(seed).choice(
            n_distinct, size=max_station_pairs, replace=False)
        pair_mask = np.zeros((s, s), dtype=bool)
        pair_mask[iu[keep], ku[keep]] = True
        pair_mask |= pair_mask.T
        np.fill_diagonal(pair_mask, True)
        subsample = {"seed": seed, "max_station_pairs": int(max_station_pairs)}

    space_idx = _bin_index(dist, space_bins)
    space_idx[~pair_mask] = -1

    # Integer lags grouped per temporal bin.
    lag_values = np.arange(t, dtype=float)
    lag_idx = _bin_index(lag_values, time_lags)

    n_h, n_c = len(space_bins), len(time_lags)
    sums = np.zeros((n_h, n_c))
    counts = np.zeros((n_h, n_c), dtype=np.int64)

    bin_masks = [space_idx == b for b in range(n_h)]
    n_ordered_space = np.array([m.sum() for m in bin_masks], dtype=np.int64)
    diag_in_bin = np.array(
        [int(np.diag(m).sum()) for m in bin_masks], dtype=np.int64)

    lag_cache = {}
    for c in range(n_c):
        lags = np.nonzero(lag_idx == c)[0]
        if lags.size == 0:
            continue
        w = np.zeros((s, s))
        n_time_pairs = 0
        zero_in_bin = False
        for tau in lags:
            tau = int(tau)
            if tau not in lag_cache:
                lag_cache[tau] = _lag_matrix(ds.values, tau)
            m = lag_cache[tau]
            if tau == 0:
                w += m
                n_time_pairs += t
                zero_in_bin = True
            else:
                w += m + m.T
                n_time_pairs += 2 * (t - tau)
        for b in range(n_h):
            if n_ordered_space[b] == 0:
                continue
            total = n_ordered_space[b] * n_time_pairs
            if zero_in_bin:
                total -= diag_in_bin[b] * t
            counts[b, c] = total
            sums[b, c] = w[bin_masks[b]].sum()

    gamma = np.full((n_h, n_c), np.nan)
    filled = counts > 0
    gamma[filled] = np.maximum(sums[filled] / (2.0 * counts[filled]), 0.0)
    return VariogramSurface(space_bins, time_lags, gamma, counts, subsample)


def residual_dataset(ds: StationDataset, predictions: np.ndarray) -> StationDataset:
    """Observed minus predicted, keeping stations, times and covariates."""
    predictions = np.asarray(predictions, dtype=float)
    if predictions.shape != ds.values.shape:
        raise ShapeError(
            f"predictions shape {predictions.shape} != values shape {ds.values.shape}"
        )
    return StationDataset(ds.station_ids, ds.coords.copy(), ds.covariate_names,
                          ds.times.copy(), ds.values - predictions)


@dataclass
class NuggetSillSummary:
    nugget: float
    sill: float
    nugget_cell: tuple
    sill_cells: tuple


def nugget_and_sill_summary(v: VariogramSurface) -> NuggetSillSummary:
    """Crude structure summary: gamma at the smallest nonempty lag cell, and
    the mean gamma over the largest-lag quartile of nonempty cells."""
    filled = np.argwhere(v.nonempty)
    if filled.size == 0:
        raise DiagnosticError("variogram surface has no nonempty cells")
    h_centers = np.array([c for c, _ in v.space_bins])
    t_centers = np.array([c for c, _ in v.time_lags])

    order = sorted(map(tuple, filled),
                   key=lambda bc: (h_centers[bc[0]], t_centers[bc[1]]))
    nb, nc = order[0]
    nugget = float(v.gamma[nb, nc])

    h_span = h_centers[filled[:, 0]]
    t_span = t_centers[filled[:, 1]]
    h_norm = h_span / h_span.max() if h_span.max() > 0 else np.zeros_like(h_span)
    t_norm = t_span / t_span.max() if t_span.max() > 0 else np.zeros_like(t_span)
    magnitude = np.hypot(h_norm, t_norm)
    cutoff = np.quantile(magnitude, 0.75)
    far = magnitude >= cutoff
    sill_cells = tuple(
        (float(h_centers[b]), float(t_centers[c]))
        for (b, c), is_far in zip(map(tuple, filled), far) if is_far
    )
    sill = float(np.mean([v.gamma[b, c] for (b, c), f in
                          zip(map(tuple, filled), far) if f]))
    return NuggetSillSummary(
        nugget=nugget, sill=sill,
        nugget_cell=(float(h_centers[nb]), float(t_centers[nc])),
        sill_cells=sill_cells,
    )


def flatness_ratio(v: VariogramSurface, require_positive_h: bool = True,
                   require_positive_tau: bool = False) -> float:
    """max(gamma)/min(gamma) over nonempty cells, optionally restricted to
    positive spatial / temporal lags. A perfectly empty selection raises;
    an all-zero selection returns 1.0 (flat); min == 0 < max returns inf."""
    h_centers = np.array([c for c, _ in v.space_bins])
    t_centers = np.array([c for c, _ in v.time_lags])
    mask = v.nonempty.copy()
    if require_positive_h:
        mask &= h_centers[:, None] > 0
    if require_positive_tau:
        mask &= t_centers[None, :] > 0
    if not mask.any():
        raise DiagnosticError("no nonempty cells in the requested lag range")
    vals = v.gamma[mask]
    lo, hi = float(vals.min()), float(vals.max())
    if hi == 0.0:
        return 1.0
    if lo == 0.0:
        return float("inf")
    return hi / lo


def save_variogram_csv(v: VariogramSurface, path, meta_path=None) -> None:
    """Rows h_center,tau_center,gamma,pairs; empty gamma field for empty cells.
    The sidecar records binning and any subsampling."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["h_center", "tau_center", "gamma", "pairs"])
        for b, (hc, _) in enumerate(v.space_bins):
            for c, (tc, _) in enumerate(v.time_lags):
                g = v.gamma[b, c]
                writer.writerow([repr(float(hc)), repr(float(tc)),
                                 "" if np.isnan(g) else repr(float(g)),
                                 int(v.pair_counts[b, c])])
    if meta_path is not None:
        meta = {
            "space_bins": [[float(c), float(t)] for c, t in v.space_bins],
            "time_lags": [[float(c), float(t)] for c, t in v.time_lags],
            "subsample": v.subsample,
        }
        with open(meta_path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
