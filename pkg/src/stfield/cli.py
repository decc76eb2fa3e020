"""Pipeline orchestration from a JSON config file.

Subcommands: `simulate` (write a synthetic benchmark as station CSVs plus
ground-truth grids), `run` (the full load/impute/split/decompose/train/
predict/diagnose pipeline), `report` (regenerate images and the summary from
an existing run directory without recomputation), and the single stages
`decompose`, `train`, `predict`, `variogram` with explicit artifact paths.

Every artifact lands in the run directory and is listed in manifest.json
with a content hash. All randomness derives from one root seed, split
deterministically per stage. Exit status: 0 success, 1 failure, 2 usage,
3 partial report.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .dataset import (
    StationDataset,
    center,
    concat_stations,
    format_time,
    impute_missing,
    load_csv,
    load_grid_csv,
    split_stations,
    write_measurements_csv,
    write_stations_csv,
)
from .eof import decompose, explained_variance, load_basis, save_basis, truncate
from .errors import ConfigurationError, StfieldError
from .model import (
    MlpConfig,
    baseline_forward,
    evaluate_mae,
    forward,
    load_model,
    predict_grid,
    save_model,
    train,
    train_single_output_baseline,
)
from .simulate import GridSpec, grid_from_cells, sample_stations, synthesize
from .variogram import empirical_semivariogram, residual_dataset, save_variogram_csv

ENV_OUTPUT_ROOT = "STFIELD_OUTPUT_ROOT"

# One root seed per run, split per stage so stages stay decoupled.
_STAGE_IDS = {"simulate": 1, "sample": 2, "split": 3, "model": 4,
              "baseline": 5, "variogram": 6}

_SIM_DEFAULTS = {
    "nx": 64, "ny": 48, "cell_size": 1.0, "origin": (0.0, 0.0),
    "n_components": 20, "t_len": 256, "noise_ratio": 0.10, "phi": 0.8,
    "length_scale": 10.0, "innovation_sd": 1.0, "method": "auto",
    "n_train": 500, "n_val": 250, "n_test": 250,
}

_VARIOGRAM_DEFAULTS = {"n_space_bins": 15, "max_time_lag": 12,
                       "max_station_pairs": None}

_TOP_KEYS = {"seed", "output", "input", "simulation", "split", "truncation",
             "model", "baseline", "variogram", "snapshot_time",
             "max_coeff_images"}


def _fmt(x) -> str:
    return repr(float(x))


def _stage_seed(root_seed: int, stage: str) -> int:
    ss = np.random.SeedSequence([int(root_seed), _STAGE_IDS[stage]])
    return int(ss.generate_state(1)[0])


@dataclass
class RunConfig:
    """Parsed and validated run configuration."""

    seed: int = 0
    output: str | None = None
    input: dict | None = None
    simulation: dict | None = None
    split: tuple = (0.6, 0.2, 0.2)
    truncation: dict = field(default_factory=lambda: {"threshold": 0.95})
    model: dict = field(default_factory=dict)
    baseline: bool = False
    variogram: dict = field(default_factory=dict)
    snapshot_time: int | None = None
    max_coeff_images: int | None = None
    config_path: Path | None = None

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(raw, config_path=path)

    @classmethod
    def from_dict(cls, raw: dict, config_path=None) -> "RunConfig":
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(
            seed=int(raw.get("seed", 0)),
            output=raw.get("output"),
            input=raw.get("input"),
            simulation=raw.get("simulation"),
            split=tuple(raw.get("split", {}).get("fractions", (0.6, 0.2, 0.2)))
            if isinstance(raw.get("split"), dict) else tuple(raw.get("split") or (0.6, 0.2, 0.2)),
            truncation=raw.get("truncation", {"threshold": 0.95}),
            model=dict(raw.get("model", {})),
            baseline=bool(raw.get("baseline", False)),
            variogram=dict(raw.get("variogram", {})),
            snapshot_time=raw.get("snapshot_time"),
            max_coeff_images=raw.get("max_coeff_images"),
            config_path=config_path,
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if (self.input is None) == (self.simulation is None):
            raise ConfigurationError(
                "exactly one of 'input' and 'simulation' must be present")
        if self.input is not None:
            missing = {"stations", "measurements"} - set(self.input)
            if missing:
                raise ConfigurationError(f"input config lacks {sorted(missing)}")
        if self.simulation is not None:
            unknown = set(self.simulation) - set(_SIM_DEFAULTS)
            if unknown:
                raise ConfigurationError(f"unknown simulation keys: {sorted(unknown)}")
        if set(self.truncation) not in ({"threshold"}, {"k"}):
            raise ConfigurationError(
                "truncation must contain exactly one of 'threshold' / 'k'")
        unknown = set(self.variogram) - set(_VARIOGRAM_DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown variogram keys: {sorted(unknown)}")

    def sim_params(self) -> dict:
        return {**_SIM_DEFAULTS, **(self.simulation or {})}

    def variogram_params(self) -> dict:
        return {**_VARIOGRAM_DEFAULTS, **self.variogram}

    def mlp_config(self, stage: str) -> MlpConfig:
        kwargs = dict(self.model)
        kwargs.setdefault("seed", _stage_seed(self.seed, stage))
        return MlpConfig(**kwargs)


def _resolve_output(cfg: RunConfig, cli_output) -> Path:
    if cli_output:
        return Path(cli_output)
    if cfg.output:
        return Path(cfg.output)
    stem = cfg.config_path.stem if cfg.config_path else "run"
    root = os.environ.get(ENV_OUTPUT_ROOT)
    base = Path(root) if root else Path.cwd() / "stfield_runs"
    return base / stem


# ---------------------------------------------------------------------------
# Data preparation shared by run and the stage commands
# ---------------------------------------------------------------------------

def _prepare_data(cfg: RunConfig):
    """(train, val, test, grid-or-None) per the config's data source."""
    if cfg.simulation is not None:
        p = cfg.sim_params()
        grid = GridSpec(nx=p["nx"], ny=p["ny"], cell_size=p["cell_size"],
                        origin=tuple(p["origin"]))
        truth = synthesize(
            grid, n_components=p["n_components"], t_len=p["t_len"],
            noise_ratio=p["noise_ratio"], phi=p["phi"],
            length_scale=p["length_scale"], innovation_sd=p["innovation_sd"],
            seed=_stage_seed(cfg.seed, "simulate"), method=p["method"],
        )
        tr, va, te = sample_stations(truth, p["n_train"], p["n_val"],
                                     p["n_test"], seed=_stage_seed(cfg.seed, "sample"))
        return tr, va, te, grid
    ds = load_csv(cfg.input["stations"], cfg.input["measurements"])
    ds = impute_missing(ds)
    tr, va, te = split_stations(ds, cfg.split, seed=_stage_seed(cfg.seed, "split"))
    grid = None
    if cfg.input.get("grid"):
        cells, names = load_grid_csv(cfg.input["grid"])
        grid = grid_from_cells(cells, names)
    return tr, va, te, grid


# ---------------------------------------------------------------------------
# Artifact writers (CSV) and renderers (PNG / summary regenerated from CSVs)
# ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_explained_variance(path, ev) -> None:
    cum = np.cumsum(ev)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "variance_fraction", "cumulative_fraction"])
        for k, (v, c) in enumerate(zip(ev, cum), start=1):
            writer.writerow([k, _fmt(v), _fmt(c)])


def _write_training_log(path, report) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mae", "val_mae", "lr"])
        for e, (tr, va, lr) in enumerate(zip(report.train_mae, report.val_mae,
                                             report.lr)):
            writer.writerow([e, _fmt(tr), _fmt(va), _fmt(lr)])


def _write_metrics(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "test_mae"])
        for name, value in rows:
            writer.writerow([name, _fmt(value)])


def _write_coeff_maps(path, grid: GridSpec, maps) -> None:
    coords = grid.cell_coords()
    k = maps.shape[0]
    flat = maps.reshape(k, -1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", *[f"coeff_{i + 1:02d}" for i in range(k)]])
        for c in range(coords.shape[0]):
            writer.writerow([_fmt(coords[c, 0]), _fmt(coords[c, 1]),
                             *[_fmt(flat[i, c]) for i in range(k)]])


def _write_field(path, grid: GridSpec, fieldvals, times) -> None:
    coords = grid.cell_coords()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", *[format_time(t) for t in times]])
        for c in range(coords.shape[0]):
            writer.writerow([_fmt(coords[c, 0]), _fmt(coords[c, 1]),
                             *[_fmt(v) for v in fieldvals[c]]])


def _read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _render_explained_variance(run: Path) -> list:
    src = run / "explained_variance.csv"
    if not src.exists():
        return [str(src.name)]
    _, rows = _read_table(src)
    cum = [float(r[2]) for r in rows]
    plots.save_curves(run / "explained_variance.png",
                      [int(r[0]) for r in rows],
                      {"cumulative": cum},
                      "Cumulative explained variance", "component", "fraction")
    return []


def _render_training_curves(run: Path) -> list:
    src = run / "training_log.csv"
    if not src.exists():
        return [src.name]
    _, rows = _read_table(src)
    series = {"train MAE": [float(r[1]) for r in rows],
              "val MAE": [float(r[2]) for r in rows]}
    bsrc = run / "baseline_training_log.csv"
    if bsrc.exists():
        _, brows = _read_table(bsrc)
        series["baseline val MAE"] = [float(r[2]) for r in brows]
    plots.save_curves(run / "training_curves.png",
                      [int(r[0]) for r in rows], series,
                      "Training history", "epoch", "MAE", logy=True)
    return []


def _render_maps(run: Path, manifest: dict) -> list:
    missing = []
    grid_meta = manifest.get("grid")
    if not grid_meta:
        return missing
    nx, ny = grid_meta["nx"], grid_meta["ny"]
    extent = grid_meta.get("extent")
    src = run / "coeff_maps.csv"
    if src.exists():
        header, rows = _read_table(src)
        k = len(header) - 2
        data = np.asarray([[float(v) for v in r] for r in rows])
        limit = manifest.get("max_coeff_images") or k
        for i in range(min(k, limit)):
            plots.save_heatmap(run / f"coeff_map_{i + 1:02d}.png",
                               data[:, 2 + i].reshape(ny, nx),
                               f"Spatial coefficient {i + 1}", "x", "y",
                               extent=extent)
    else:
        missing.append(src.name)
    src = run / "field.csv"
    if src.exists():
        header, rows = _read_table(src)
        t_count = len(header) - 2
        snap = manifest.get("snapshot_time")
        if snap is None:
            snap = t_count // 2
        col = 2 + int(snap)
        values = np.asarray([float(r[col]) for r in rows])
        plots.save_heatmap(run / "field_snapshot.png", values.reshape(ny, nx),
                           f"Predicted field at {header[col]}", "x", "y",
                           extent=extent)
    else:
        missing.append(src.name)
    return missing


def _render_variograms(run: Path, names=("data", "model", "residual")) -> list:
    missing = []
    for name in names:
        src = run / f"variogram_{name}.csv"
        if not src.exists():
            missing.append(src.name)
            continue
        _, rows = _read_table(src)
        h_centers = sorted({float(r[0]) for r in rows})
        t_centers = sorted({float(r[1]) for r in rows})
        gamma = np.full((len(h_centers), len(t_centers)), np.nan)
        hi = {h: i for i, h in enumerate(h_centers)}
        ti = {t: i for i, t in enumerate(t_centers)}
        for r in rows:
            if r[2] != "":
                gamma[hi[float(r[0])], ti[float(r[1])]] = float(r[2])
        plots.save_heatmap(run / f"variogram_{name}.png", gamma.T,
                           f"Semivariogram ({name})",
                           "spatial lag bin", "time lag bin")
    return missing


def _render_summary(run: Path, manifest: dict) -> None:
    lines = ["run summary", "===========",
             f"status: {manifest.get('status', 'unknown')}",
             f"stages: {', '.join(manifest.get('stages', []))}", ""]
    metrics = run / "metrics.csv"
    if metrics.exists():
        _, rows = _read_table(metrics)
        lines.append("test MAE:")
        lines += [f"  {name}: {value}" for name, value in rows]
        lines.append("")
    basis_meta = run / "basis" / "metadata.json"
    if basis_meta.exists():
        meta = json.loads(basis_meta.read_text())
        lines.append(
            f"basis: stations={meta['stations']} times={meta['times']} "
            f"k_total={meta['k_total']} k_used={meta['k_used']} "
            f"variance_captured={meta['variance_captured']:.6f}")
        lines.append("")
    lines.append("artifact hashes: manifest.json")
    (run / "summary.txt").write_text("\n".join(lines) + "\n")


def _render_all(run: Path, manifest: dict) -> list:
    # Regenerate only what the recorded stages actually produced.
    stages = set(manifest.get("stages", ()))
    missing = []
    if "decompose" in stages:
        missing += _render_explained_variance(run)
    if "train" in stages:
        missing += _render_training_curves(run)
    if "predict" in stages:
        missing += _render_maps(run, manifest)
    if "variogram" in stages:
        missing += _render_variograms(run)
    _render_summary(run, manifest)
    return missing


def _collect_artifacts(run: Path) -> dict:
    skip = {"manifest.json"}
    out = {}
    for path in sorted(run.rglob("*")):
        if path.is_file() and path.name not in skip:
            out[path.relative_to(run).as_posix()] = _sha256(path)
    return out


def _write_manifest(run: Path, manifest: dict) -> None:
    manifest["artifacts"] = _collect_artifacts(run)
    with open(run / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _say(quiet, message):
    if not quiet:
        print(message, flush=True)


def cmd_simulate(cfg: RunConfig, out: Path, quiet=False) -> int:
    if cfg.simulation is None:
        raise ConfigurationError("'simulate' needs a config with a 'simulation' section")
    out.mkdir(parents=True, exist_ok=True)
    p = cfg.sim_params()
    _say(quiet, f"simulate: {p['nx']}x{p['ny']} grid, T={p['t_len']}, "
                f"{p['n_train']}/{p['n_val']}/{p['n_test']} stations -> {out}")
    grid = GridSpec(nx=p["nx"], ny=p["ny"], cell_size=p["cell_size"],
                    origin=tuple(p["origin"]))
    truth = synthesize(grid, n_components=p["n_components"], t_len=p["t_len"],
                       noise_ratio=p["noise_ratio"], phi=p["phi"],
                       length_scale=p["length_scale"],
                       innovation_sd=p["innovation_sd"],
                       seed=_stage_seed(cfg.seed, "simulate"), method=p["method"])
    subsets = sample_stations(truth, p["n_train"], p["n_val"], p["n_test"],
                              seed=_stage_seed(cfg.seed, "sample"))
    for name, ds in zip(("train", "val", "test"), subsets):
        write_stations_csv(ds, out / f"stations_{name}.csv")
        write_measurements_csv(ds, out / f"measurements_{name}.csv")
    truth_dir = out / "truth"
    truth_dir.mkdir(exist_ok=True)
    for k in range(truth.n_components):
        np.savetxt(truth_dir / f"component_{k + 1:02d}.csv", truth.fields[k],
                   fmt="%.17g", delimiter=",")
    np.savetxt(truth_dir / "series.csv", truth.series, fmt="%.17g", delimiter=",")
    with open(truth_dir / "metadata.json", "w") as fh:
        json.dump({"nx": p["nx"], "ny": p["ny"], "cell_size": p["cell_size"],
                   "origin": list(p["origin"]), "n_components": p["n_components"],
                   "t_len": p["t_len"], "noise_sd": truth.noise_sd,
                   "seed": cfg.seed}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest = {"status": "ok", "failed_stage": None, "error": None,
                "stages": ["simulate"], "config": cfg_echo(cfg),
                "grid": {"nx": p["nx"], "ny": p["ny"]}}
    _write_manifest(out, manifest)
    _say(quiet, f"simulate: wrote {len(manifest['artifacts'])} artifacts")
    return 0


def cfg_echo(cfg: RunConfig) -> dict:
    return {
        "seed": cfg.seed, "input": cfg.input, "simulation": cfg.simulation,
        "split": list(cfg.split), "truncation": cfg.truncation,
        "model": cfg.model, "baseline": cfg.baseline,
        "variogram": cfg.variogram, "snapshot_time": cfg.snapshot_time,
        "max_coeff_images": cfg.max_coeff_images,
    }


def cmd_run(cfg: RunConfig, out: Path, baseline=False, quiet=False) -> int:
    out.mkdir(parents=True, exist_ok=True)
    run_baseline = baseline or cfg.baseline
    manifest = {"status": "ok", "failed_stage": None, "error": None,
                "stages": [], "config": cfg_echo(cfg), "grid": None,
                "snapshot_time": cfg.snapshot_time,
                "max_coeff_images": cfg.max_coeff_images}
    stage = "data"
    try:
        _say(quiet, f"run: preparing data -> {out}")
        tr, va, te, grid = _prepare_data(cfg)
        for name, ds in zip(("train", "val", "test"), (tr, va, te)):
            write_stations_csv(ds, out / f"stations_{name}.csv")
            write_measurements_csv(ds, out / f"measurements_{name}.csv")
        manifest["stages"].append(stage)

        stage = "decompose"
        fit_ds = concat_stations(tr, va)
        basis_full = decompose(center(fit_ds))
        ev = explained_variance(basis_full)
        _write_explained_variance(out / "explained_variance.csv", ev)
        tb = truncate(basis_full, **cfg.truncation)
        save_basis(tb, out / "basis")
        _say(quiet, f"decompose: K={basis_full.k_total}, keeping "
                    f"{tb.k_used} ({tb.variance_captured:.4f} of variance)")
        manifest["stages"].append(stage)

        stage = "train"
        mcfg = cfg.mlp_config("model")
        model, report = train(tr, va, tb, mcfg)
        _write_training_log(out / "training_log.csv", report)
        save_model(model, out / "model")
        _say(quiet, f"train: {report.stopped_epoch + 1} epochs, "
                    f"best val MAE {report.best_val_mae:.4f}")
        manifest["stages"].append(stage)

        singles = None
        if run_baseline:
            stage = "baseline"
            bcfg = cfg.mlp_config("baseline")
            singles, breport = train_single_output_baseline(tr, va, tb, bcfg)
            _write_training_log(out / "baseline_training_log.csv", breport)
            _say(quiet, f"baseline: {len(singles)} nets, mean best val "
                        f"coefficient MAE {breport.best_val_mae:.4f}")
            manifest["stages"].append(stage)

        if grid is not None:
            stage = "predict"
            maps, fieldvals = predict_grid(model, grid)
            _write_coeff_maps(out / "coeff_maps.csv", grid, maps)
            _write_field(out / "field.csv", grid, fieldvals, tr.times)
            manifest["grid"] = {
                "nx": grid.nx, "ny": grid.ny,
                "extent": [grid.origin[0],
                           grid.origin[0] + (grid.nx - 1) * grid.cell_size,
                           grid.origin[1],
                           grid.origin[1] + (grid.ny - 1) * grid.cell_size],
            }
            manifest["stages"].append(stage)

        stage = "evaluate"
        _, signal = forward(model, te.coords)
        metrics = [("multi_output", evaluate_mae(signal, te.values))]
        if singles is not None:
            _, bsignal = baseline_forward(singles, tb, te.coords)
            metrics.append(("single_output_baseline",
                            evaluate_mae(bsignal, te.values)))
        _write_metrics(out / "metrics.csv", metrics)
        for name, value in metrics:
            _say(quiet, f"evaluate: {name} test MAE {value:.4f}")
        manifest["stages"].append(stage)

        stage = "variogram"
        vp = cfg.variogram_params()
        vkw = dict(n_space_bins=vp["n_space_bins"],
                   max_time_lag=vp["max_time_lag"],
                   max_station_pairs=vp["max_station_pairs"],
                   seed=_stage_seed(cfg.seed, "variogram"))
        v_data = empirical_semivariogram(te, **vkw)
        model_ds = StationDataset(te.station_ids, te.coords, te.covariate_names,
                                  te.times, signal)
        bins = dict(space_bins=v_data.space_bins, time_lags=v_data.time_lags,
                    max_station_pairs=vp["max_station_pairs"],
                    seed=_stage_seed(cfg.seed, "variogram"))
        v_model = empirical_semivariogram(model_ds, **bins)
        v_res = empirical_semivariogram(residual_dataset(te, signal), **bins)
        for name, surface in (("data", v_data), ("model", v_model),
                              ("residual", v_res)):
            save_variogram_csv(surface, out / f"variogram_{name}.csv",
                               out / f"variogram_{name}.meta.json")
        manifest["stages"].append(stage)

        stage = "render"
        manifest["stages"].append(stage)
        _render_all(out, manifest)
        _write_manifest(out, manifest)
        _say(quiet, f"run: ok ({len(manifest['artifacts'])} artifacts)")
        return 0
    except Exception as exc:  # any stage failure leaves a FAILED manifest
        manifest["status"] = "FAILED"
        manifest["failed_stage"] = stage
        manifest["error"] = str(exc)
        _write_manifest(out, manifest)
        print(f"error: stage '{stage}' failed: {exc}", file=sys.stderr)
        return 1


def cmd_report(run_dir: Path, quiet=False) -> int:
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        print(f"error: no manifest.json in {run_dir}", file=sys.stderr)
        return 1
    manifest = json.loads(manifest_path.read_text())
    missing = _render_all(run_dir, manifest)
    if missing:
        for name in missing:
            print(f"report: missing artifact {name}", file=sys.stderr)
        _say(quiet, "report: partial")
        return 3
    _say(quiet, f"report: regenerated images and summary in {run_dir}")
    return 0


def cmd_decompose(cfg: RunConfig, out: Path, quiet=False) -> int:
    out.mkdir(parents=True, exist_ok=True)
    tr, va, _, _ = _prepare_data(cfg)
    basis_full = decompose(center(concat_stations(tr, va)))
    _write_explained_variance(out / "explained_variance.csv",
                              explained_variance(basis_full))
    tb = truncate(basis_full, **cfg.truncation)
    save_basis(tb, out / "basis")
    _render_explained_variance(out)
    _say(quiet, f"decompose: K={basis_full.k_total}, kept {tb.k_used} "
                f"-> {out / 'basis'}")
    return 0


def cmd_train(cfg: RunConfig, basis_dir: Path, out: Path, baseline=False,
              quiet=False) -> int:
    out.mkdir(parents=True, exist_ok=True)
    tr, va, _, _ = _prepare_data(cfg)
    tb = load_basis(basis_dir)
    mcfg = cfg.mlp_config("model")
    model, report = train(tr, va, tb, mcfg)
    _write_training_log(out / "training_log.csv", report)
    save_model(model, out / "model")
    _say(quiet, f"train: best val MAE {report.best_val_mae:.4f} -> {out / 'model'}")
    if baseline or cfg.baseline:
        bcfg = cfg.mlp_config("baseline")
        _, breport = train_single_output_baseline(tr, va, tb, bcfg)
        _write_training_log(out / "baseline_training_log.csv", breport)
        _say(quiet, f"baseline: mean best val coefficient MAE "
                    f"{breport.best_val_mae:.4f}")
    _render_training_curves(out)
    return 0


def cmd_predict(cfg: RunConfig, model_dir: Path, out: Path, grid_path=None,
                quiet=False) -> int:
    out.mkdir(parents=True, exist_ok=True)
    model = load_model(model_dir)
    if grid_path:
        cells, names = load_grid_csv(grid_path)
        grid = grid_from_cells(cells, names)
    elif cfg.simulation is not None:
        p = cfg.sim_params()
        grid = GridSpec(nx=p["nx"], ny=p["ny"], cell_size=p["cell_size"],
                        origin=tuple(p["origin"]))
    elif cfg.input and cfg.input.get("grid"):
        cells, names = load_grid_csv(cfg.input["grid"])
        grid = grid_from_cells(cells, names)
    else:
        raise ConfigurationError("predict needs --grid or a grid in the config")
    maps, fieldvals = predict_grid(model, grid)
    times = np.arange(model.n_times, dtype=np.int64)
    _write_coeff_maps(out / "coeff_maps.csv", grid, maps)
    _write_field(out / "field.csv", grid, fieldvals, times)
    manifest = {"grid": {"nx": grid.nx, "ny": grid.ny},
                "snapshot_time": cfg.snapshot_time,
                "max_coeff_images": cfg.max_coeff_images}
    _render_maps(out, manifest)
    _say(quiet, f"predict: {grid.n_cells} cells x {model.n_times} times -> {out}")
    return 0


def cmd_variogram(cfg: RunConfig, out: Path, stations=None, measurements=None,
                  quiet=False) -> int:
    out.mkdir(parents=True, exist_ok=True)
    if stations and measurements:
        ds = impute_missing(load_csv(stations, measurements))
    else:
        tr, va, te, _ = _prepare_data(cfg)
        ds = concat_stations(concat_stations(tr, va), te)
    vp = cfg.variogram_params()
    surface = empirical_semivariogram(
        ds, n_space_bins=vp["n_space_bins"], max_time_lag=vp["max_time_lag"],
        max_station_pairs=vp["max_station_pairs"],
        seed=_stage_seed(cfg.seed, "variogram"))
    save_variogram_csv(surface, out / "variogram_data.csv",
                       out / "variogram_data.meta.json")
    _render_variograms(out, names=("data",))
    _say(quiet, f"variogram: {int(surface.nonempty.sum())} nonempty cells -> {out}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stfield",
        description="Spatio-temporal field interpolation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON config file")
            p.add_argument("--output", help="output directory "
                           f"(default: config, then ${ENV_OUTPUT_ROOT})")
            p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--quiet", action="store_true", help="suppress progress")

    p = sub.add_parser("simulate", help="write a synthetic benchmark dataset")
    common(p)
    p = sub.add_parser("run", help="full pipeline from a config")
    common(p)
    p.add_argument("--baseline", action="store_true",
                   help="also train the single-output baseline")
    p = sub.add_parser("report", help="regenerate images/summary from a run")
    p.add_argument("run_dir", help="existing run directory")
    p.add_argument("--quiet", action="store_true", help="suppress progress")
    p = sub.add_parser("decompose", help="decompose and save the basis")
    common(p)
    p = sub.add_parser("train", help="train against a saved basis")
    common(p)
    p.add_argument("--basis", required=True, help="basis directory")
    p.add_argument("--baseline", action="store_true",
                   help="also train the single-output baseline")
    p = sub.add_parser("predict", help="predict on a grid with a saved model")
    common(p)
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--grid", help="grid CSV (x,y[,alt,...])")
    p = sub.add_parser("variogram", help="empirical semivariogram of a dataset")
    common(p)
    p.add_argument("--stations", help="stations CSV (overrides config input)")
    p.add_argument("--measurements", help="measurements CSV")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(Path(args.run_dir), quiet=args.quiet)
        cfg = RunConfig.from_file(args.config)
        if args.seed is not None:
            cfg.seed = int(args.seed)
        out = _resolve_output(cfg, args.output)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, quiet=args.quiet)
        if args.command == "run":
            return cmd_run(cfg, out, baseline=args.baseline, quiet=args.quiet)
        if args.command == "decompose":
            return cmd_decompose(cfg, out, quiet=args.quiet)
        if args.command == "train":
            return cmd_train(cfg, Path(args.basis), out,
                             baseline=args.baseline, quiet=args.quiet)
        if args.command == "predict":
            return cmd_predict(cfg, Path(args.model), out,
                               grid_path=args.grid, quiet=args.quiet)
        if args.command == "variogram":
            return cmd_variogram(cfg, out, stations=args.stations,
                                 measurements=args.measurements,
                                 quiet=args.quiet)
        raise AssertionError(args.command)
    except StfieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
