"""
Interpolating a simulated field from scattered stations
========================================================

The full story at small scale: generate a ground-truth field as a sum of
Gaussian-random-field maps times AR(1) series plus noise, sample scattered
stations from it, decompose the station data, train the multi-output
network (loss on the recomposed field) and the per-coefficient baseline,
then compare their test errors and look at a predicted map.
"""
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from stfield import (
    CenteredDataset, GridSpec, MlpConfig, baseline_forward, concat_stations,
    decompose, evaluate_mae, explained_variance, forward, predict_grid,
    sample_stations, synthesize, train, train_single_output_baseline,
    truncate,
)

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

grid = GridSpec(nx=40, ny=30)
truth = synthesize(grid, n_components=10, t_len=128, noise_ratio=0.10,
                   phi=0.8, length_scale=8.0, seed=5)
train_ds, val_ds, test_ds = sample_stations(truth, 200, 66, 66, seed=6)
print(f"grid {grid.nx}x{grid.ny}, T={truth.n_times}, "
      f"{train_ds.n_stations}/{val_ds.n_stations}/{test_ds.n_stations} stations")

# Decompose the training + validation stations; the 10 generating
# components dominate even with the added noise.
fit_ds = concat_stations(train_ds, val_ds)
mean = fit_ds.values.mean(axis=0)
basis = decompose(CenteredDataset(fit_ds.values - mean, mean, fit_ds))
cum = np.cumsum(explained_variance(basis))
print(f"cumulative variance at 10 components: {cum[9]:.4f}")
tb = truncate(basis, k=10)

config = MlpConfig(hidden_layers=4, width=64, max_epochs=400, batch_size=64,
                   seed=1)
t0 = time.time()
model, report = train(train_ds, val_ds, tb, config)
print(f"multi-output: {report.stopped_epoch + 1} epochs in {time.time() - t0:.0f}s, "
      f"best val MAE {report.best_val_mae:.3f}")
_, signal = forward(model, test_ds.coords)
mae_multi = evaluate_mae(signal, test_ds.values)

t0 = time.time()
singles, _ = train_single_output_baseline(train_ds, val_ds, tb, config)
_, baseline_signal = baseline_forward(singles, tb, test_ds.coords)
mae_base = evaluate_mae(baseline_signal, test_ds.values)
print(f"baseline: 10 single-output nets in {time.time() - t0:.0f}s")
print(f"test MAE  multi-output {mae_multi:.3f}  |  baseline {mae_base:.3f}  "
      f"(noise sd {truth.noise_sd:.3f})")

# Predict the whole grid and compare one snapshot against the truth.
maps, field = predict_grid(model, grid)
snap = truth.n_times // 2
true_map = truth.values[:, snap].reshape(grid.ny, grid.nx)
pred_map = field[:, snap].reshape(grid.ny, grid.nx)

fig, axes = plt.subplots(1, 3, figsize=(14, 4))
for ax, data, title in zip(
        axes, (true_map, pred_map, maps[0]),
        (f"truth at t={snap}", f"prediction at t={snap}",
         "spatial coefficient map 1")):
    im = ax.imshow(data, origin="lower", cmap="viridis")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
fig.tight_layout()
fig.savefig(out / "02_maps.png", dpi=110)
print(f"figure written to {out / '02_maps.png'}")
