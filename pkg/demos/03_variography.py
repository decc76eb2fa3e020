"""
Reading spatio-temporal structure off semivariogram surfaces
=============================================================

The empirical semivariogram gamma(h, tau) is half the mean squared
difference between values at spatial lag h and temporal lag tau. A
structured field climbs with both lags toward a sill; white noise is flat
at its variance (pure nugget). Residuals of a good model should look like
the latter. This demo computes all three surfaces.
"""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from stfield import (
    GridSpec, MlpConfig, StationDataset, CenteredDataset, concat_stations,
    decompose, empirical_semivariogram, flatness_ratio, forward,
    nugget_and_sill_summary, residual_dataset, sample_stations, synthesize,
    train, truncate,
)

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)
rng = np.random.default_rng(2)

# A structured field sampled at stations, plus a pure-noise twin.
grid = GridSpec(nx=32, ny=24)
truth = synthesize(grid, n_components=8, t_len=96, noise_ratio=0.10,
                   phi=0.8, length_scale=6.0, seed=7)
train_ds, val_ds, test_ds = sample_stations(truth, 120, 50, 50, seed=8)

noise_ds = StationDataset(test_ds.station_ids, test_ds.coords,
                          test_ds.covariate_names, test_ds.times,
                          rng.normal(size=test_ds.values.shape))

v_field = empirical_semivariogram(test_ds, max_time_lag=10)
v_noise = empirical_semivariogram(noise_ds, space_bins=v_field.space_bins,
                                  time_lags=v_field.time_lags)
print(f"structured field: max/min gamma ratio {flatness_ratio(v_field):.1f}")
print(f"iid noise       : max/min gamma ratio {flatness_ratio(v_noise):.2f}")
summary = nugget_and_sill_summary(v_field)
print(f"field nugget ~ {summary.nugget:.2f} at {summary.nugget_cell}, "
      f"sill ~ {summary.sill:.2f}")

# Fit the model and look at its residual surface: structure extracted.
fit_ds = concat_stations(train_ds, val_ds)
mean = fit_ds.values.mean(axis=0)
tb = truncate(decompose(CenteredDataset(fit_ds.values - mean, mean, fit_ds)), k=8)
model, _ = train(train_ds, val_ds, tb,
                 MlpConfig(hidden_layers=4, width=64, max_epochs=500,
                           batch_size=64, seed=3))
_, signal = forward(model, test_ds.coords)
v_res = empirical_semivariogram(residual_dataset(test_ds, signal),
                                space_bins=v_field.space_bins,
                                time_lags=v_field.time_lags)
print(f"model residuals : max/min gamma ratio {flatness_ratio(v_res):.2f} "
      f"(noise variance {truth.noise_sd ** 2:.3f})")

fig, axes = plt.subplots(1, 3, figsize=(14, 4))
for ax, v, title in zip(axes, (v_field, v_noise, v_res),
                        ("test data", "iid noise", "model residuals")):
    im = ax.imshow(np.ma.masked_invalid(v.gamma).T, origin="lower",
                   cmap="viridis", aspect="auto")
    ax.set_title(f"gamma(h, tau): {title}")
    ax.set_xlabel("spatial lag bin")
    ax.set_ylabel("time lag")
    fig.colorbar(im, ax=ax)
fig.tight_layout()
fig.savefig(out / "03_variograms.png", dpi=110)
print(f"figure written to {out / '03_variograms.png'}")
