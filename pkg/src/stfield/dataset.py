"""Station time-series data model: loading, imputation, splitting, centering.

`StationDataset` is the observational unit shared by every other module:
S stations with spatial covariates, observed over T regularly spaced time
steps. Values live in an S x T float matrix with NaN marking missing cells.
All operations here are pure functions of their inputs (plus an explicit
seed where randomness is involved); nothing mutates a dataset in place.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    DuplicateKeyError,
    ImputationError,
    ParseError,
    PreconditionError,
    ReferentialError,
    ShapeError,
)

# Imputation stencil: the 8 spatially nearest stations over the missing
# timestamp and its two contiguous neighbours, i.e. up to 24 cells.
N_SPATIAL_NEIGHBOURS = 8
TIME_WINDOW = 1


@dataclass
class StationDataset:
    """Irregularly located station time series on a shared time axis.

    station_ids: one identifier per station, unique.
    coords: (S, D) covariate matrix; columns follow `covariate_names`,
        the first two are the spatial x, y coordinates.
    times: strictly increasing time axis, either integer indices or
        numpy datetime64 values.
    values: (S, T) measurements, NaN where missing.
    """

    station_ids: tuple
    coords: np.ndarray
    covariate_names: tuple
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.station_ids = tuple(str(s) for s in self.station_ids)
        self.coords = np.asarray(self.coords, dtype=float)
        self.covariate_names = tuple(self.covariate_names)
        self.times = np.asarray(self.times)
        self.values = np.asarray(self.values, dtype=float)
        s = len(self.station_ids)
        if self.coords.ndim != 2 or self.coords.shape[0] != s:
            raise ShapeError(f"coords must be ({s}, D), got {self.coords.shape}")
        if len(self.covariate_names) != self.coords.shape[1]:
            raise ShapeError("covariate_names must match coords columns")
        if self.times.ndim != 1:
            raise ShapeError("times must be one-dimensional")
        if self.values.shape != (s, self.times.shape[0]):
            raise ShapeError(
                f"values must be ({s}, {self.times.shape[0]}), got {self.values.shape}"
            )
        if len(set(self.station_ids)) != s:
            raise DuplicateKeyError("station_ids contains duplicates")
        if self.times.size > 1 and not np.all(self.times[1:] > self.times[:-1]):
            raise PreconditionError("times must be strictly increasing")

    @property
    def n_stations(self) -> int:
        return len(self.station_ids)

    @property
    def n_times(self) -> int:
        return self.times.shape[0]

    @property
    def n_missing(self) -> int:
        return int(np.isnan(self.values).sum())

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())

    def take(self, indices) -> "StationDataset":
        """Row subset preserving the time axis."""
        idx = np.asarray(indices, dtype=int)
        return StationDataset(
            station_ids=tuple(self.station_ids[i] for i in idx),
            coords=self.coords[idx].copy(),
            covariate_names=self.covariate_names,
            times=self.times.copy(),
            values=self.values[idx].copy(),
        )


@dataclass
class CenteredDataset:
    """Per-time spatially centered values plus the removed mean series."""

    centered: np.ndarray
    mean_series: np.ndarray
    source: StationDataset | None = None

    def __post_init__(self):
        self.centered = np.asarray(self.centered, dtype=float)
        self.mean_series = np.asarray(self.mean_series, dtype=float)
        if self.centered.ndim != 2:
            raise ShapeError("centered must be 2-D")
        if self.mean_series.shape != (self.centered.shape[1],):
            raise ShapeError("mean_series length must equal the time axis")


@dataclass
class SplitSpec:
    """Disjoint train/validation/test station index sets for one dataset."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    rng_seed: int


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _parse_time_token(token: str, path, line_no: int):
    txt = token.strip()
    try:
        return int(txt)
    except ValueError:
        pass
    try:
        return np.datetime64(datetime.fromisoformat(txt), "s")
    except ValueError:
        raise ParseError(
            f"{path}: line {line_no}: time '{txt}' is neither an integer index "
            "nor an ISO-8601 timestamp"
        ) from None


def _read_stations(path) -> tuple:
    ids, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header[:3] != ["station_id", "x", "y"]:
            raise ParseError(
                f"{path}: header must start with 'station_id,x,y', got {','.join(header)}"
            )
        cov_names = tuple(header[1:])
        n_cols = len(header)
        seen = set()
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_cols:
                raise ParseError(
                    f"{path}: line {line_no}: expected {n_cols} fields, got {len(row)}"
                )
            sid = row[0].strip()
            if sid in seen:
                raise DuplicateKeyError(f"{path}: line {line_no}: duplicate station '{sid}'")
            seen.add(sid)
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise ParseError(
                    f"{path}: line {line_no}: non-numeric coordinate in {row[1:]}"
                ) from None
            ids.append(sid)
    if not ids:
        raise ParseError(f"{path}: no station rows")
    return ids, np.asarray(rows, dtype=float), cov_names


def load_csv(stations_path, measurements_path) -> StationDataset:
    """Load the two-file CSV schema into a StationDataset.

    stations CSV: header ``station_id,x,y[,alt,...]``, one row per station.
    measurements CSV: header ``station_id,time,value``; `time` is an ISO-8601
    timestamp or an integer index, an empty `value` field marks a missing
    observation. The time axis must have a constant step; cells without a row
    are flagged missing.
    """
    ids, coords, cov_names = _read_stations(stations_path)
    id_index = {sid: i for i, sid in enumerate(ids)}

    def open_measurements():
        fh = open(measurements_path, newline="")
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            fh.close()
            raise ParseError(f"{measurements_path}: empty file")
        if [h.strip() for h in header] != ["station_id", "time", "value"]:
            fh.close()
            raise ParseError(
                f"{measurements_path}: header must be 'station_id,time,value'"
            )
        return fh, reader

    # First pass: collect the raw time vocabulary (with the line it first
    # appeared on) and check referential integrity; values are parsed in the
    # second pass.
    raw_times = {}
    fh, reader = open_measurements()
    try:
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(
                    f"{measurements_path}: line {line_no}: expected 3 fields, got {len(row)}"
                )
            sid = row[0].strip()
            if sid not in id_index:
                raise ReferentialError(
                    f"{measurements_path}: line {line_no}: station '{sid}' not in stations file"
                )
            raw_times.setdefault(row[1].strip(), line_no)
    finally:
        fh.close()
    if not raw_times:
        raise ParseError(f"{measurements_path}: no measurement rows")

    parsed = {raw: _parse_time_token(raw, measurements_path, line_no)
              for raw, line_no in raw_times.items()}
    kinds = {type(v) for v in parsed.values()}
    if len(kinds) > 1:
        raise ParseError(
            f"{measurements_path}: mixed integer and timestamp time values"
        )
    times = np.sort(np.asarray(list(parsed.values())))
    if times.size > 1:
        steps = np.unique(np.diff(times))
        if steps.size != 1:
            raise ParseError(
                f"{measurements_path}: irregular time axis (steps {steps[:5]}...); "
                "a constant step is required"
            )
    time_index = {t: j for j, t in enumerate(times.tolist())}
    raw_to_col = {
        raw: time_index[v.item() if isinstance(v, np.datetime64) else v]
        for raw, v in parsed.items()
    }

    values = np.full((len(ids), times.size), np.nan)
    seen = np.zeros(values.shape, dtype=bool)
    fh, reader = open_measurements()
    try:
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            i = id_index[row[0].strip()]
            j = raw_to_col[row[1].strip()]
            if seen[i, j]:
                raise DuplicateKeyError(
                    f"{measurements_path}: line {line_no}: duplicate (station, time) "
                    f"key ('{row[0].strip()}', '{row[1].strip()}')"
                )
            seen[i, j] = True
            val = row[2].strip()
            if val:
                try:
                    values[i, j] = float(val)
                except ValueError:
                    raise ParseError(
                        f"{measurements_path}: line {line_no}: non-numeric value '{val}'"
                    ) from None
    finally:
        fh.close()

    return StationDataset(ids, coords, cov_names, times, values)


# ---------------------------------------------------------------------------
# Imputation
# ---------------------------------------------------------------------------

def _neighbour_ranking(ds: StationDataset, station: int) -> list:
    """Stations ordered by (x,y) Euclidean distance, ties by ascending id."""
    xy = ds.coords[:, :2]
    d = np.sqrt(((xy - xy[station]) ** 2).sum(axis=1))
    others = [k for k in range(ds.n_stations) if k != station]
    others.sort(key=lambda k: (d[k], ds.station_ids[k]))
    return others[:N_SPATIAL_NEIGHBOURS]


def impute_missing(ds: StationDataset) -> StationDataset:
    """Fill missing cells with the mean of up to 24 spatio-temporal neighbours.

    For a missing (station, time) cell the stencil covers the 8 spatially
    nearest stations over the missing timestamp plus the previous and next
    one (series boundaries keep the existing side). Only originally observed
    values enter the average, so the result does not depend on the order in
    which holes are filled. A cell whose whole stencil is missing raises
    ImputationError.
    """
    observed = ds.values
    filled = observed.copy()
    miss_i, miss_j = np.nonzero(np.isnan(observed))
    if miss_i.size == 0:
        return StationDataset(ds.station_ids, ds.coords.copy(), ds.covariate_names,
                              ds.times.copy(), filled)

    rankings = {}
    t_max = ds.n_times - 1
    for i, j in zip(miss_i, miss_j):
        if i not in rankings:
            rankings[i] = _neighbour_ranking(ds, i)
        window = range(max(0, j - TIME_WINDOW), min(t_max, j + TIME_WINDOW) + 1)
        cells = []
        for k in rankings[i]:
            for t in window:
                v = observed[k, t]
                if not np.isnan(v):
                    cells.append(v)
        if not cells:
            raise ImputationError(
                f"cell (station '{ds.station_ids[i]}', time index {j}) has no "
                "observed neighbours in its 24-cell stencil"
            )
        filled[i, j] = np.mean(np.asarray(cells))

    return StationDataset(ds.station_ids, ds.coords.copy(), ds.covariate_names,
                          ds.times.copy(), filled)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def _partition_sizes(n: int, fractions) -> list:
    # Largest-remainder apportionment; deterministic, sums to n.
    raw = [n * f for f in fractions]
    sizes = [int(np.floor(r)) for r in raw]
    remainder = n - sum(sizes)
    order = sorted(range(len(raw)), key=lambda i: raw[i] - sizes[i], reverse=True)
    for i in order[:remainder]:
        sizes[i] += 1
    return sizes


def make_split(ds: StationDataset, fractions, seed: int) -> SplitSpec:
    """Random disjoint train/validation/test station index sets.

    The permutation is applied to stations sorted by id, so the split depends
    only on the id set and the seed, not on row order. Each subset must be
    nonempty.
    """
    fr = [float(f) for f in fractions]
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigurationError(
            f"fractions must be three nonnegative reals summing to 1, got {fr}"
        )
    sizes = _partition_sizes(ds.n_stations, fr)
    if min(sizes) == 0:
        raise ConfigurationError(
            f"fractions {fr} yield an empty subset for {ds.n_stations} stations "
            f"(sizes {sizes})"
        )
    canonical = np.array(sorted(range(ds.n_stations), key=lambda i: ds.station_ids[i]))
    perm = np.random.default_rng(seed).permutation(ds.n_stations)
    shuffled = canonical[perm]
    a, b = sizes[0], sizes[0] + sizes[1]

    def ordered(idx):
        idx = np.asarray(idx)
        return idx[np.argsort([ds.station_ids[i] for i in idx])]

    return SplitSpec(
        train=ordered(shuffled[:a]),
        validation=ordered(shuffled[a:b]),
        test=ordered(shuffled[b:]),
        rng_seed=seed,
    )


def split_stations(ds: StationDataset, fractions, seed: int):
    """Partition stations into (train, validation, test) datasets."""
    spec = make_split(ds, fractions, seed)
    return ds.take(spec.train), ds.take(spec.validation), ds.take(spec.test)


# ---------------------------------------------------------------------------
# Centering
# ---------------------------------------------------------------------------

def center(ds: StationDataset) -> CenteredDataset:
    """Remove the per-time spatial mean; keep it for later un-centering."""
    if ds.has_missing:
        raise PreconditionError("center requires a complete dataset; impute first")
    mean_series = ds.values.mean(axis=0)
    return CenteredDataset(ds.values - mean_series, mean_series, ds)


# ---------------------------------------------------------------------------
# Helpers shared with simulate / cli
# ---------------------------------------------------------------------------

def concat_stations(a: StationDataset, b: StationDataset) -> StationDataset:
    """Stack two datasets sharing the time axis and covariate schema."""
    if a.covariate_names != b.covariate_names:
        raise ShapeError("covariate schemas differ")
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise ShapeError("time axes differ")
    return StationDataset(
        station_ids=a.station_ids + b.station_ids,
        coords=np.vstack([a.coords, b.coords]),
        covariate_names=a.covariate_names,
        times=a.times.copy(),
        values=np.vstack([a.values, b.values]),
    )


def load_grid_csv(path):
    """Read a prediction-grid CSV (header ``x,y[,alt,...]``) into a
    (cells, columns) matrix plus the column names."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header[:2] != ["x", "y"]:
            raise ParseError(f"{path}: header must start with 'x,y'")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: line {line_no}: expected {len(header)} fields, "
                    f"got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ParseError(
                    f"{path}: line {line_no}: non-numeric cell in {row}"
                ) from None
    if not rows:
        raise ParseError(f"{path}: no grid rows")
    return np.asarray(rows, dtype=float), tuple(header)


def format_time(t) -> str:
    if isinstance(t, np.datetime64):
        return np.datetime_as_string(t, unit="s")
    return str(int(t))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_stations_csv(ds: StationDataset, path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station_id", *ds.covariate_names])
        for i, sid in enumerate(ds.station_ids):
            writer.writerow([sid, *[_fmt(v) for v in ds.coords[i]]])


def write_measurements_csv(ds: StationDataset, path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station_id", "time", "value"])
        for i, sid in enumerate(ds.station_ids):
            row_vals = ds.values[i]
            for j in range(ds.n_times):
                v = row_vals[j]
                writer.writerow([sid, format_time(ds.times[j]),
                                 "" if np.isnan(v) else _fmt(v)])
