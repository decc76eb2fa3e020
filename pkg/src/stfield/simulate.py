"""Synthetic benchmark: Gaussian random fields combined with AR(1) series.

Builds a ground-truth spatio-temporal field as a sum of products of unit
variance Gaussian random fields (squared-exponential covariance) and
stationary AR(1) coefficient series, plus white noise scaled to a fraction
of the noise-free field's standard deviation, then samples disjoint station
sets from the grid. Every generator is deterministic per seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import StationDataset
from .errors import CapabilityError, ConfigurationError, ShapeError

# Exact covariance factorization is cheap up to this many cells; larger
# grids switch to circulant embedding.
CHOLESKY_AUTO_LIMIT = 4096
CHOLESKY_HARD_LIMIT = 8192
_JITTER = 1e-10


@dataclass
class GridSpec:
    """Regular prediction grid; cell index iy * nx + ix, x varying fastest."""

    nx: int
    ny: int
    cell_size: float = 1.0
    origin: tuple = (0.0, 0.0)
    covariates: np.ndarray | None = None
    covariate_names: tuple = ()

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1 or self.cell_size <= 0:
            raise ConfigurationError(
                f"grid needs nx, ny >= 1 and cell_size > 0, got "
                f"({self.nx}, {self.ny}, {self.cell_size})"
            )
        if self.covariates is not None:
            self.covariates = np.asarray(self.covariates, dtype=float)
            if self.covariates.shape[0] != self.n_cells:
                raise ShapeError("per-cell covariates must have nx*ny rows")
            if len(self.covariate_names) != self.covariates.shape[1]:
                raise ShapeError("covariate_names must match covariate columns")

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def cell_coords(self) -> np.ndarray:
        """(n_cells, 2) x,y coordinates."""
        xs = self.origin[0] + np.arange(self.nx) * self.cell_size
        ys = self.origin[1] + np.arange(self.ny) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def cell_covariates(self) -> np.ndarray:
        """(n_cells, 2 + extras) model-input matrix: x, y, then extras."""
        xy = self.cell_coords()
        if self.covariates is None:
            return xy
        return np.column_stack([xy, self.covariates])

    def covariate_header(self) -> tuple:
        return ("x", "y", *self.covariate_names)


@dataclass
class SyntheticTruth:
    """One realization of the synthetic benchmark field.

    fields: (K, ny, nx) spatial component maps.
    series: (K, T) temporal coefficient series.
    values: (n_cells, T) realized noisy field shared by all station samples.
    """

    grid: GridSpec
    fields: np.ndarray
    series: np.ndarray
    noise_sd: float
    seed: int
    values: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self.fields = np.asarray(self.fields, dtype=float)
        self.series = np.asarray(self.series, dtype=float)
        if self.fields.shape[0] != self.series.shape[0]:
            raise ShapeError("fields and series must have one entry per component")
        if self.noise_sd < 0:
            raise ConfigurationError(f"noise_sd must be >= 0, got {self.noise_sd}")

    @property
    def n_components(self) -> int:
        return self.fields.shape[0]

    @property
    def n_times(self) -> int:
        return self.series.shape[1]

    def noise_free(self) -> np.ndarray:
        """(n_cells, T) field without the noise term, recomputed on demand."""
        flat = self.fields.reshape(self.n_components, -1)
        return flat.T @ self.series


def grid_from_cells(cells: np.ndarray, names) -> GridSpec:
    """Rebuild a GridSpec from per-cell rows (x, y, extra covariates...).

    The rows must form a complete regular lattice with square cells; any
    extra columns become per-cell covariates reordered into cell order.
    """
    cells = np.asarray(cells, dtype=float)
    xs = np.unique(cells[:, 0])
    ys = np.unique(cells[:, 1])
    nx, ny = xs.size, ys.size
    if nx * ny != cells.shape[0]:
        raise ConfigurationError(
            f"{cells.shape[0]} rows do not form a {nx} x {ny} lattice"
        )
    def step(axis):
        diffs = np.diff(axis)
        if diffs.size and not np.allclose(diffs, diffs[0], rtol=1e-9):
            raise ConfigurationError("grid spacing is not constant")
        return float(diffs[0]) if diffs.size else 1.0
    sx, sy = step(xs), step(ys)
    if nx > 1 and ny > 1 and not np.isclose(sx, sy, rtol=1e-9):
        raise ConfigurationError(f"grid cells must be square, got {sx} x {sy}")
    cell_size = sx if nx > 1 else sy
    ix = np.searchsorted(xs, cells[:, 0])
    iy = np.searchsorted(ys, cells[:, 1])
    order = iy * nx + ix
    if np.unique(order).size != cells.shape[0]:
        raise ConfigurationError("duplicate grid cells")
    covariates = None
    if cells.shape[1] > 2:
        covariates = np.empty((cells.shape[0], cells.shape[1] - 2))
        covariates[order] = cells[:, 2:]
    return GridSpec(nx=nx, ny=ny, cell_size=cell_size,
                    origin=(float(xs[0]), float(ys[0])),
                    covariates=covariates, covariate_names=tuple(names[2:]))


class GrfSampler:
    """Reusable sampler for zero-mean, unit-variance Gaussian random fields
    with covariance exp(-d^2 / (2 * length_scale^2)) on a regular grid.

    Factorizes the covariance once (exact Cholesky for small grids, circulant
    embedding beyond CHOLESKY_AUTO_LIMIT cells) and draws any number of
    independent fields from it.
    """

    def __init__(self, grid: GridSpec, length_scale: float, method: str = "auto"):
        if length_scale <= 0:
            raise ConfigurationError(f"length_scale must be positive, got {length_scale}")
        if method not in ("auto", "cholesky", "spectral"):
            raise ConfigurationError(f"unknown method '{method}'")
        self.grid = grid
        self.length_scale = float(length_scale)
        n = grid.n_cells
        if method == "auto":
            method = "cholesky" if n <= CHOLESKY_AUTO_LIMIT else "spectral"
        if method == "cholesky" and n > CHOLESKY_HARD_LIMIT:
            raise CapabilityError(
                f"exact factorization of a {n}-cell covariance is too large; "
                "use method='spectral' (circulant embedding)"
            )
        self.method = method
        if method == "cholesky":
            coords = grid.cell_coords()
            d2 = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
            cov = np.exp(-d2 / (2.0 * self.length_scale ** 2))
            cov[np.diag_indices_from(cov)] += _JITTER
            self._factor = np.linalg.cholesky(cov)
        else:
            self._eig_sqrt, self._embed_shape = self._spectral_setup()

    def _spectral_setup(self):
        # Embed the grid in a torus large enough that wrapped distances match
        # true distances over the window and the kernel has decayed; grow the
        # padding until the circulant eigenvalues are nonnegative.
        nx, ny = self.grid.nx, self.grid.ny
        cell = self.grid.cell_size
        pad = int(np.ceil(6.0 * self.length_scale / cell))
        for _ in range(4):
            m1 = 2 * (ny + pad)
            m2 = 2 * (nx + pad)
            k1 = np.arange(m1)
            k2 = np.arange(m2)
            dy = np.minimum(k1, m1 - k1) * cell
            dx = np.minimum(k2, m2 - k2) * cell
            d2 = dy[:, None] ** 2 + dx[None, :] ** 2
            cov_row = np.exp(-d2 / (2.0 * self.length_scale ** 2))
            lam = np.fft.fft2(cov_row).real / (m1 * m2)
            if lam.min() >= -1e-9 * lam.max():
                return np.sqrt(np.maximum(lam, 0.0)), (m1, m2)
            pad *= 2
        raise CapabilityError(
            "circulant embedding failed to reach nonnegative eigenvalues; "
            "length_scale is too large relative to the grid"
        )

    def sample(self, seed) -> np.ndarray:
        """One (ny, nx) field; identical seeds give identical fields."""
        rng = np.random.default_rng(seed)
        nx, ny = self.grid.nx, self.grid.ny
        if self.method == "cholesky":
            flat = self._factor @ rng.standard_normal(self.grid.n_cells)
            return flat.reshape(ny, nx)
        m1, m2 = self._embed_shape
        noise = rng.standard_normal((m1, m2)) + 1j * rng.standard_normal((m1, m2))
        spectrum = np.fft.fft2(self._eig_sqrt * noise)
        return spectrum.real[:ny, :nx]


def gaussian_random_field(grid: GridSpec, length_scale: float, seed,
                          method: str = "auto") -> np.ndarray:
    """One stationary Gaussian field on the grid; see GrfSampler."""
    return GrfSampler(grid, length_scale, method).sample(seed)


def ar1_series(length: int, phi: float, innovation_sd: float, seed) -> np.ndarray:
    """Stationary order-1 autoregressive series.

    Initialized from the stationary distribution (variance
    innovation_sd^2 / (1 - phi^2)), then y[t] = phi*y[t-1] + noise.
    """
    if length < 1:
        raise ConfigurationError(f"length must be positive, got {length}")
    if not abs(phi) < 1:
        raise ConfigurationError(f"AR(1) requires |phi| < 1, got {phi} (nonstationary)")
    if innovation_sd <= 0:
        raise ConfigurationError(f"innovation_sd must be positive, got {innovation_sd}")
    rng = np.random.default_rng(seed)
    y = np.empty(length)
    y[0] = rng.standard_normal() * innovation_sd / np.sqrt(1.0 - phi * phi)
    eta = rng.standard_normal(length - 1) * innovation_sd
    for t in range(1, length):
        y[t] = phi * y[t - 1] + eta[t - 1]
    return y


def synthesize(grid: GridSpec, n_components: int = 20, t_len: int = 1080,
               noise_ratio: float = 0.10, phi: float = 0.8,
               length_scale: float = 10.0, innovation_sd: float = 1.0,
               seed: int = 0, method: str = "auto") -> SyntheticTruth:
    """Generate the benchmark field: sum of field-by-series products + noise.

    The white-noise standard deviation is noise_ratio times the standard
    deviation of the noise-free field over all grid-time pairs. One noise
    realization is drawn for the whole grid so that later station samples
    share it.
    """
    if n_components < 1 or t_len < 1:
        raise ConfigurationError("n_components and t_len must be positive")
    if noise_ratio < 0:
        raise ConfigurationError(f"noise_ratio must be >= 0, got {noise_ratio}")
    root = np.random.SeedSequence(seed)
    fields_ss, series_ss, noise_ss = root.spawn(3)

    sampler = GrfSampler(grid, length_scale, method)
    fields = np.stack([sampler.sample(s) for s in fields_ss.spawn(n_components)])
    series = np.stack([
        ar1_series(t_len, phi, innovation_sd, s) for s in series_ss.spawn(n_components)
    ])

    clean = fields.reshape(n_components, -1).T @ series
    sd_free = float(clean.std())
    noise_sd = noise_ratio * sd_free
    if noise_sd > 0:
        noise = np.random.default_rng(noise_ss).standard_normal(clean.shape)
        values = clean + noise_sd * noise
    else:
        values = clean.copy()

    return SyntheticTruth(grid=grid, fields=fields, series=series,
                          noise_sd=noise_sd, seed=seed, values=values)


def sample_stations(truth: SyntheticTruth, n_train: int, n_val: int, n_test: int,
                    seed) -> tuple:
    """Draw disjoint train/validation/test station sets from the grid cells.

    Cells are drawn uniformly without replacement; each dataset carries the
    cell x,y (plus any grid covariates) and the full noisy time series.
    """
    counts = (n_train, n_val, n_test)
    if min(counts) < 1:
        raise ConfigurationError(
            f"each subset needs at least one station, got {counts}"
        )
    total = sum(counts)
    n_cells = truth.grid.n_cells
    if total > n_cells:
        raise ConfigurationError(
            f"requested {total} stations from a {n_cells}-cell grid"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n_cells, size=total, replace=False)
    groups = (chosen[:n_train], chosen[n_train:n_train + n_val],
              chosen[n_train + n_val:])

    covs = truth.grid.cell_covariates()
    names = truth.grid.covariate_header()
    times = np.arange(truth.n_times, dtype=np.int64)
    width = len(str(n_cells - 1))

    def build(cells):
        cells = np.sort(cells)
        return StationDataset(
            station_ids=tuple(f"g{c:0{width}d}" for c in cells),
            coords=covs[cells],
            covariate_names=names,
            times=times,
            values=truth.values[cells],
        )

    return tuple(build(g) for g in groups)
