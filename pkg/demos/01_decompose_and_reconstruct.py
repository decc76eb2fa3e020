"""
Temporal bases and spatial coefficients from station data
==========================================================

A spatio-temporal matrix (stations x times) factors into a handful of
orthonormal temporal basis functions and one coefficient per basis per
station. This demo builds a field with three known temporal patterns,
decomposes it, and shows that a few components carry almost everything.
"""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from stfield import (
    StationDataset, center, decompose, explained_variance, reconstruct,
    truncate,
)

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)
rng = np.random.default_rng(0)

# 40 stations at random locations, 200 time steps, three temporal patterns
# (slow wave, fast wave, trend) whose strength varies smoothly in space.
n_stations, n_times = 40, 200
coords = rng.uniform(0, 10, size=(n_stations, 2))
tt = np.linspace(0, 4 * np.pi, n_times)
patterns = np.stack([np.sin(tt), np.cos(3 * tt), tt / tt.max() - 0.5])
loadings = np.column_stack([
    np.sin(coords[:, 0]),
    np.cos(coords[:, 1]),
    coords[:, 0] * coords[:, 1] / 50,
])
values = loadings @ patterns + 0.05 * rng.normal(size=(n_stations, n_times))

ds = StationDataset([f"s{i:02d}" for i in range(n_stations)], coords,
                    ("x", "y"), np.arange(n_times), values)

# Center per time step (the decomposition works on anomalies), then factor.
cd = center(ds)
basis = decompose(cd)
ev = explained_variance(basis)
print("variance fraction of the first 5 components:", np.round(ev[:5], 4))
print("three generating patterns -> three dominant components, noise after")

# Keep 99% of the variance and look at the reconstruction error.
tb = truncate(basis, threshold=0.99)
print(f"threshold 0.99 keeps {tb.k_used} of {basis.k_total} components")
recon = reconstruct(tb.spatial_coeffs, tb, add_mean=True)
err = np.abs(recon - ds.values).max() / np.abs(ds.values).max()
print(f"max relative reconstruction error with {tb.k_used} components: {err:.2%}")

fig, axes = plt.subplots(2, 1, figsize=(8, 6))
for k in range(3):
    axes[0].plot(tb.temporal_bases[k], label=f"basis {k + 1}")
axes[0].set_title("Leading temporal basis functions")
axes[0].legend()
axes[1].plot(np.cumsum(ev), marker="o")
axes[1].set_title("Cumulative explained variance")
axes[1].set_xlabel("component")
fig.tight_layout()
fig.savefig(out / "01_bases_and_variance.png", dpi=110)
print(f"figure written to {out / '01_bases_and_variance.png'}")
