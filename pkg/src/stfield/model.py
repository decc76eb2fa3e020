"""Multi-output feedforward network with a frozen recomposition layer.

Spatial covariates feed a fully connected ELU stack whose final linear layer
emits one coefficient per retained temporal basis (the auxiliary output).
A frozen linear map then recomposes the spatio-temporal signal from those
coefficients and the temporal bases, and the training loss is computed on
that recomposed signal against the raw observations, so gradients flow
through the recomposition into the network while the bases never change.

A single-output baseline trains one copy of the same stack per component
against the spatial coefficients themselves; its predictions are recomposed
outside the network. Everything is plain numpy and deterministic per seed.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dataset import StationDataset
from .eof import TruncatedBasis, project, reconstruct
from .errors import (
    ConfigurationError,
    NumericError,
    ShapeError,
    TrainingError,
)
from .simulate import GridSpec

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
_CSV_FMT = "%.17g"


@dataclass
class MlpConfig:
    """Architecture and optimization settings.

    Defaults: 6 hidden layers of 100 ELU units with He initialization,
    Nadam with a one-cycle learning-rate schedule spanning the full epoch
    budget, mean absolute error loss, early stopping with best-weight
    restore. `loss="mse"` substitutes squared error (used by gradient
    checks); everything else is unchanged.
    """

    hidden_layers: int = 6
    width: int = 100
    activation: str = "elu"
    weight_init: str = "he"
    loss: str = "mae"
    max_lr: float = 5e-3
    warmup_frac: float = 0.3
    start_div: float = 25.0
    final_div: float = 100.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    batch_norm: bool = False
    patience: int | None = 20
    batch_size: int = 256
    max_epochs: int = 400
    seed: int = 0

    def __post_init__(self):
        if self.hidden_layers < 1 or self.width < 1:
            raise ConfigurationError("hidden_layers and width must be >= 1")
        if self.activation != "elu":
            raise ConfigurationError(f"unsupported activation '{self.activation}'")
        if self.weight_init != "he":
            raise ConfigurationError(f"unsupported weight_init '{self.weight_init}'")
        if self.loss not in ("mae", "mse"):
            raise ConfigurationError(f"loss must be 'mae' or 'mse', got '{self.loss}'")
        if self.max_lr <= 0 or not 0 < self.warmup_frac < 1:
            raise ConfigurationError("max_lr must be > 0 and warmup_frac in (0, 1)")
        if self.start_div < 1 or self.final_div < 1:
            raise ConfigurationError("start_div and final_div must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ConfigurationError("patience must be >= 1 (or None to disable)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigurationError("batch_size and max_epochs must be >= 1")


@dataclass
class TrainReport:
    """Per-epoch signal-space MAE curves plus stopping bookkeeping."""

    train_mae: list
    val_mae: list
    lr: list
    best_epoch: int
    stopped_epoch: int
    best_val_mae: float
    seconds: float
    components: tuple = ()


def one_cycle_lr(step: int, total_steps: int, max_lr: float,
                 warmup_frac: float = 0.3, start_div: float = 25.0,
                 final_div: float = 100.0) -> float:
    """Cosine ramp from max_lr/start_div up to max_lr over the warmup
    fraction of the budget, then cosine anneal down to max_lr/final_div."""
    warm = max(1, int(round(total_steps * warmup_frac)))
    if step < warm:
        p = step / warm
        lo = max_lr / start_div
        return lo + (max_lr - lo) * 0.5 * (1.0 - np.cos(np.pi * p))
    p = (step - warm) / max(1, total_steps - warm)
    end = max_lr / final_div
    return end + (max_lr - end) * 0.5 * (1.0 + np.cos(np.pi * p))


class _Nadam:
    """Nesterov-accelerated adaptive moments with bias correction."""

    def __init__(self, params, beta1: float, beta2: float, eps: float):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / b1c
            v_hat = v / b2c
            p -= lr * (self.beta1 * m_hat + (1.0 - self.beta1) / b1c * g) \
                / (np.sqrt(v_hat) + self.eps)


def _matmul(x, w, training):
    # Inference uses einsum: its per-element accumulation order does not
    # depend on the batch size, so forward on a batch is bitwise identical
    # to row-by-row forward. Training steps use BLAS for speed.
    if training:
        return x @ w
    return np.einsum("nd,dh->nh", x, w, optimize=False)


class _Network:
    """Fully connected ELU stack with optional per-layer batch norm
    (after the affine transform, before the activation)."""

    def __init__(self, dims, batch_norm: bool, rng):
        self.dims = list(dims)
        self.batch_norm = batch_norm
        self.n_hidden = len(dims) - 2
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            self.weights.append(
                rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
            self.biases.append(np.zeros(fan_out))
        if batch_norm:
            self.bn_gamma = [np.ones(d) for d in dims[1:-1]]
            self.bn_beta = [np.zeros(d) for d in dims[1:-1]]
            self.bn_mean = [np.zeros(d) for d in dims[1:-1]]
            self.bn_var = [np.ones(d) for d in dims[1:-1]]

    # -- parameter plumbing -------------------------------------------------

    def parameters(self):
        params = []
        for i in range(len(self.weights)):
            params += [self.weights[i], self.biases[i]]
            if self.batch_norm and i < self.n_hidden:
                params += [self.bn_gamma[i], self.bn_beta[i]]
        return params

    def state(self):
        arrays = [p.copy() for p in self.parameters()]
        if self.batch_norm:
            arrays += [a.copy() for a in self.bn_mean + self.bn_var]
        return arrays

    def load_state(self, arrays) -> None:
        params = self.parameters()
        for p, a in zip(params, arrays):
            p[...] = a
        if self.batch_norm:
            rest = arrays[len(params):]
            h = self.n_hidden
            for i in range(h):
                self.bn_mean[i][...] = rest[i]
                self.bn_var[i][...] = rest[h + i]

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    # -- forward / backward --------------------------------------------------

    def forward(self, x: np.ndarray, training: bool = False):
        a = x
        cache = []
        for i in range(self.n_hidden):
            z = _matmul(a, self.weights[i], training) + self.biases[i]
            if self.batch_norm:
                if training:
                    mu = z.mean(axis=0)
                    var = z.var(axis=0)
                    self.bn_mean[i] = (1 - BN_MOMENTUM) * self.bn_mean[i] + BN_MOMENTUM * mu
                    self.bn_var[i] = (1 - BN_MOMENTUM) * self.bn_var[i] + BN_MOMENTUM * var
                else:
                    mu, var = self.bn_mean[i], self.bn_var[i]
                inv = 1.0 / np.sqrt(var + BN_EPS)
                z_hat = (z - mu) * inv
                y = z_hat * self.bn_gamma[i] + self.bn_beta[i]
            else:
                z_hat = inv = None
                y = z
            a_out = np.where(y > 0, y, np.expm1(np.minimum(y, 0.0)))
            cache.append((a, y, a_out, z_hat, inv))
            a = a_out
        out = _matmul(a, self.weights[-1], training) + self.biases[-1]
        cache.append((a,))
        return out, cache

    def backward(self, cache, d_out: np.ndarray):
        """Gradients aligned with `parameters()` for the cached forward pass
        (training-mode batch-norm semantics)."""
        grads = [None] * len(self.parameters())
        pos = len(grads)
        a_last = cache[-1][0]
        w_grad = a_last.T @ d_out
        b_grad = d_out.sum(axis=0)
        da = d_out @ self.weights[-1].T
        grads[pos - 2:pos] = [w_grad, b_grad]
        pos -= 2
        per_hidden = 4 if self.batch_norm else 2
        for i in reversed(range(self.n_hidden)):
            a_in, y, a_out, z_hat, inv = cache[i]
            dy = da * np.where(y > 0, 1.0, a_out + 1.0)
            if self.batch_norm:
                d_gamma = (dy * z_hat).sum(axis=0)
                d_beta = dy.sum(axis=0)
                dz_hat = dy * self.bn_gamma[i]
                n = z_hat.shape[0]
                dz = (inv / n) * (n * dz_hat - dz_hat.sum(axis=0)
                                  - z_hat * (dz_hat * z_hat).sum(axis=0))
            else:
                dz = dy
            w_grad = a_in.T @ dz
            b_grad = dz.sum(axis=0)
            da = dz @ self.weights[i].T
            if self.batch_norm:
                grads[pos - per_hidden:pos] = [w_grad, b_grad, d_gamma, d_beta]
            else:
                grads[pos - per_hidden:pos] = [w_grad, b_grad]
            pos -= per_hidden
        return grads


@dataclass
class MlpModel:
    """Trained multi-output network plus everything needed for inference:
    the frozen recomposition matrix, the temporal mean, and the covariate
    standardization statistics from the training stations."""

    net: _Network
    recomposition: np.ndarray
    mean_series: np.ndarray
    cov_mean: np.ndarray
    cov_std: np.ndarray
    covariate_names: tuple
    config: MlpConfig

    @property
    def input_dim(self) -> int:
        return int(self.net.dims[0])

    @property
    def k_used(self) -> int:
        return int(self.recomposition.shape[0])

    @property
    def n_times(self) -> int:
        return int(self.recomposition.shape[1])


@dataclass
class SingleOutputModel:
    """One baseline network predicting a single spatial coefficient."""

    net: _Network
    component: int
    cov_mean: np.ndarray
    cov_std: np.ndarray
    covariate_names: tuple
    config: MlpConfig

    def predict(self, covariates: np.ndarray) -> np.ndarray:
        x = _standardize(covariates, self.cov_mean, self.cov_std,
                         self.net.dims[0])
        return self.net.forward(x, training=False)[0][:, 0]


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def _standardize(covariates, mean, std, expected_dim):
    x = np.atleast_2d(np.asarray(covariates, dtype=float))
    if x.shape[1] != expected_dim:
        raise ShapeError(f"expected {expected_dim} covariates, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise NumericError("covariates contain non-finite entries")
    return (x - mean) / std


def forward(model: MlpModel, covariates: np.ndarray):
    """(coefficients, signal) for raw covariate rows.

    Standardization happens inside so callers pass covariates exactly as
    stored in datasets/grids. Inference uses stored batch-norm statistics.
    """
    x = _standardize(covariates, model.cov_mean, model.cov_std, model.input_dim)
    coeffs, _ = model.net.forward(x, training=False)
    signal = _matmul(coeffs, model.recomposition, False) + model.mean_series
    return coeffs, signal


def baseline_forward(models, basis: TruncatedBasis, covariates: np.ndarray):
    """(coefficients, signal) from K single-output nets, recomposed via the
    truncated basis."""
    cols = [m.predict(covariates) for m in sorted(models, key=lambda m: m.component)]
    coeffs = np.column_stack(cols)
    signal = reconstruct(coeffs, basis, add_mean=True)
    return coeffs, signal


def predict_grid(model: MlpModel, grid: GridSpec):
    """Coefficient maps (K, ny, nx) and the reconstructed field
    (n_cells, T) over a regular grid."""
    x = grid.cell_covariates()
    coeffs, signal = forward(model, x)
    maps = coeffs.T.reshape(model.k_used, grid.ny, grid.nx)
    return maps, signal


def evaluate_mae(predictions: np.ndarray, truth: np.ndarray) -> float:
    predictions = np.asarray(predictions, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if predictions.shape != truth.shape:
        raise ShapeError(f"shape mismatch {predictions.shape} vs {truth.shape}")
    return float(np.mean(np.abs(predictions - truth)))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _loss_and_grads(net, x, y, recomposition, loss, training):
    out, cache = net.forward(x, training)
    if recomposition is not None:
        phi, mean = recomposition
        pred = out @ phi + mean
    else:
        pred = out
    resid = pred - y
    if loss == "mae":
        value = np.mean(np.abs(resid))
        d_pred = np.sign(resid) / resid.size
    else:
        value = np.mean(resid * resid)
        d_pred = (2.0 / resid.size) * resid
    d_out = d_pred @ phi.T if recomposition is not None else d_pred
    return value, net.backward(cache, d_out)


def loss_and_gradients(model: MlpModel, covariates, targets, training: bool = True):
    """Training loss and parameter gradients for one batch, aligned with
    `model.net.parameters()`. Exposed for gradient verification."""
    x = _standardize(covariates, model.cov_mean, model.cov_std, model.input_dim)
    rec = (model.recomposition, model.mean_series)
    return _loss_and_grads(model.net, x, np.asarray(targets, dtype=float),
                           rec, model.config.loss, training)


def _eval_mae(net, x, y, recomposition):
    out, _ = net.forward(x, training=False)
    if recomposition is not None:
        phi, mean = recomposition
        out = out @ phi + mean
    return float(np.mean(np.abs(out - y)))


def _fit(net, x_tr, y_tr, x_val, y_val, config, recomposition, shuffle_rng):
    n = x_tr.shape[0]
    steps_per_epoch = -(-n // config.batch_size)
    total_steps = config.max_epochs * steps_per_epoch
    opt = _Nadam(net.parameters(), config.beta1, config.beta2, config.eps)

    best_val = np.inf
    best_state = net.state()
    best_epoch = 0
    wait = 0
    hist_tr, hist_val, hist_lr = [], [], []
    t0 = time.perf_counter()
    step = 0
    epoch = 0
    for epoch in range(config.max_epochs):
        order = shuffle_rng.permutation(n)
        lr = config.max_lr
        for start in range(0, n, config.batch_size):
            rows = order[start:start + config.batch_size]
            lr = one_cycle_lr(step, total_steps, config.max_lr,
                              config.warmup_frac, config.start_div,
                              config.final_div)
            loss, grads = _loss_and_grads(net, x_tr[rows], y_tr[rows],
                                          recomposition, config.loss, True)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, learning rate {lr:.3g}")
            opt.step(net.parameters(), grads, lr)
            step += 1
        hist_tr.append(_eval_mae(net, x_tr, y_tr, recomposition))
        hist_val.append(_eval_mae(net, x_val, y_val, recomposition))
        hist_lr.append(lr)
        if hist_val[-1] < best_val:
            best_val = hist_val[-1]
            best_state = net.state()
            best_epoch = epoch
            wait = 0
        else:
            wait += 1
        if config.patience is not None and wait >= config.patience:
            break
    net.load_state(best_state)
    return TrainReport(
        train_mae=hist_tr, val_mae=hist_val, lr=hist_lr,
        best_epoch=best_epoch, stopped_epoch=epoch,
        best_val_mae=float(best_val), seconds=time.perf_counter() - t0,
    )


def _check_training_inputs(train_ds, val_ds, basis):
    if train_ds.covariate_names != val_ds.covariate_names:
        raise ShapeError("train and validation covariate schemas differ")
    if train_ds.n_times != basis.n_times or val_ds.n_times != basis.n_times:
        raise ShapeError("datasets and basis disagree on the time axis length")
    if train_ds.has_missing or val_ds.has_missing:
        raise NumericError("training data must be complete; impute first")


def _covariate_stats(coords):
    mean = coords.mean(axis=0)
    std = coords.std(axis=0)
    std = np.where(std == 0, 1.0, std)  # constant covariates pass through
    return mean, std


def train(train_ds: StationDataset, val_ds: StationDataset,
          basis: TruncatedBasis, config: MlpConfig):
    """Fit the multi-output network; returns (model, report).

    The loss is computed on the recomposed signal against raw observed
    values over all (station, time) pairs in a batch. Early stopping
    monitors validation MAE in signal space and the best-epoch weights are
    restored. Deterministic for a fixed config seed.
    """
    _check_training_inputs(train_ds, val_ds, basis)
    cov_mean, cov_std = _covariate_stats(train_ds.coords)
    root = np.random.SeedSequence(config.seed)
    init_ss, shuffle_ss = root.spawn(2)

    dims = [train_ds.coords.shape[1]] + [config.width] * config.hidden_layers \
        + [basis.temporal_bases.shape[0]]
    net = _Network(dims, config.batch_norm, np.random.default_rng(init_ss))
    model = MlpModel(
        net=net,
        recomposition=basis.temporal_bases.copy(),
        mean_series=basis.mean_series.copy(),
        cov_mean=cov_mean,
        cov_std=cov_std,
        covariate_names=train_ds.covariate_names,
        config=config,
    )
    x_tr = _standardize(train_ds.coords, cov_mean, cov_std, dims[0])
    x_val = _standardize(val_ds.coords, cov_mean, cov_std, dims[0])
    rec = (model.recomposition, model.mean_series)
    report = _fit(net, x_tr, train_ds.values, x_val, val_ds.values,
                  config, rec, np.random.default_rng(shuffle_ss))
    return model, report


def train_single_output_baseline(train_ds: StationDataset, val_ds: StationDataset,
                                 basis: TruncatedBasis, config: MlpConfig):
    """Fit one single-output network per retained component.

    Each net shares the multi-output architecture minus the recomposition
    layer and minimizes MAE against its own spatial coefficient (targets
    obtained by projecting the centered station series onto the bases).
    Returns (list of per-component models, aggregate report).
    """
    _check_training_inputs(train_ds, val_ds, basis)
    cov_mean, cov_std = _covariate_stats(train_ds.coords)
    k_used = basis.temporal_bases.shape[0]
    alpha_tr = project(train_ds.values - basis.mean_series, basis)
    alpha_val = project(val_ds.values - basis.mean_series, basis)

    dims = [train_ds.coords.shape[1]] + [config.width] * config.hidden_layers + [1]
    x_tr = _standardize(train_ds.coords, cov_mean, cov_std, dims[0])
    x_val = _standardize(val_ds.coords, cov_mean, cov_std, dims[0])

    models, reports = [], []
    t0 = time.perf_counter()
    for k, child in enumerate(np.random.SeedSequence(config.seed).spawn(k_used)):
        init_ss, shuffle_ss = child.spawn(2)
        net = _Network(dims, config.batch_norm, np.random.default_rng(init_ss))
        rep = _fit(net, x_tr, alpha_tr[:, k:k + 1], x_val, alpha_val[:, k:k + 1],
                   config, None, np.random.default_rng(shuffle_ss))
        models.append(SingleOutputModel(net, k, cov_mean, cov_std,
                                        train_ds.covariate_names, config))
        reports.append(rep)

    longest = max(len(r.train_mae) for r in reports)

    def padded(series_list):
        rows = [s + [s[-1]] * (longest - len(s)) for s in series_list]
        return np.mean(np.asarray(rows), axis=0).tolist()

    aggregate = TrainReport(
        train_mae=padded([r.train_mae for r in reports]),
        val_mae=padded([r.val_mae for r in reports]),
        lr=max(reports, key=lambda r: len(r.lr)).lr,
        best_epoch=max(r.best_epoch for r in reports),
        stopped_epoch=max(r.stopped_epoch for r in reports),
        best_val_mae=float(np.mean([r.best_val_mae for r in reports])),
        seconds=time.perf_counter() - t0,
        components=tuple(reports),
    )
    return models, aggregate


# ---------------------------------------------------------------------------
# Persistence: per-layer weight CSVs plus a metadata file
# ---------------------------------------------------------------------------

def basis_fingerprint(recomposition: np.ndarray, mean_series: np.ndarray) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(recomposition).tobytes())
    digest.update(np.ascontiguousarray(mean_series).tobytes())
    return digest.hexdigest()


def save_model(model: MlpModel, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    net = model.net
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        np.savetxt(directory / f"layer_{i}_w.csv", w, fmt=_CSV_FMT, delimiter=",")
        np.savetxt(directory / f"layer_{i}_b.csv", b, fmt=_CSV_FMT, delimiter=",")
    if net.batch_norm:
        for i in range(net.n_hidden):
            np.savetxt(directory / f"bn_{i}.csv",
                       np.vstack([net.bn_gamma[i], net.bn_beta[i],
                                  net.bn_mean[i], net.bn_var[i]]),
                       fmt=_CSV_FMT, delimiter=",")
    np.savetxt(directory / "recomposition.csv", model.recomposition,
               fmt=_CSV_FMT, delimiter=",")
    np.savetxt(directory / "mean.csv", model.mean_series, fmt=_CSV_FMT, delimiter=",")
    meta = {
        "config": asdict(model.config),
        "dims": net.dims,
        "covariate_names": list(model.covariate_names),
        "cov_mean": [float(v) for v in model.cov_mean],
        "cov_std": [float(v) for v in model.cov_std],
        "k_used": model.k_used,
        "basis_fingerprint": basis_fingerprint(model.recomposition, model.mean_series),
    }
    with open(directory / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(directory) -> MlpModel:
    directory = Path(directory)
    with open(directory / "metadata.json") as fh:
        meta = json.load(fh)
    config = MlpConfig(**meta["config"])
    dims = meta["dims"]
    net = _Network(dims, config.batch_norm, np.random.default_rng(0))
    for i in range(len(dims) - 1):
        net.weights[i] = np.loadtxt(directory / f"layer_{i}_w.csv",
                                    delimiter=",", ndmin=2)
        net.biases[i] = np.atleast_1d(np.loadtxt(directory / f"layer_{i}_b.csv",
                                                 delimiter=","))
    if config.batch_norm:
        for i in range(net.n_hidden):
            block = np.loadtxt(directory / f"bn_{i}.csv", delimiter=",", ndmin=2)
            net.bn_gamma[i], net.bn_beta[i] = block[0].copy(), block[1].copy()
            net.bn_mean[i], net.bn_var[i] = block[2].copy(), block[3].copy()
    recomposition = np.loadtxt(directory / "recomposition.csv", delimiter=",", ndmin=2)
    mean_series = np.atleast_1d(np.loadtxt(directory / "mean.csv", delimiter=","))
    return MlpModel(
        net=net,
        recomposition=recomposition,
        mean_series=mean_series,
        cov_mean=np.asarray(meta["cov_mean"], dtype=float),
        cov_std=np.asarray(meta["cov_std"], dtype=float),
        covariate_names=tuple(meta["covariate_names"]),
        config=config,
    )
