"""End-to-end experiment protocol.

Draws process parameters uniformly from their operating bounds, runs the
thermal solver per sample, filters runs that never melt, splits 80/10/10,
z-scores inputs and targets with statistics from the training rows only,
trains the operator and the feed-forward baseline with Adam, and evaluates
RMSE / R-squared / per-sample absolute relative errors in physical units.

Everything is deterministic under (seed, configuration): sampling, the
split, weight initialization, and minibatch shuffling all derive from seeded
generators, so datasets, weights, and metrics reproduce bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import fno, mlp, thermal
from .numerics import AdamState, NonFiniteGradientError, adam_update, mse, mse_grad
from .storage import load_container, save_container

SCHEMA_VERSION = 1
PARAM_NAMES = tuple(thermal.PARAMETER_BOUNDS)
QOI_NAMES = thermal.QOI_NAMES  # (bead_volume, max_temp); fixed target column order
QOI_UNITS = ("mm^3", "K")

MODEL_KINDS = ("fno", "dnn", "fno-series")
DEFAULT_LR = {"fno": 0.001, "dnn": 0.007, "fno-series": 0.001}
DEFAULT_MODES = {"fno": 5, "fno-series": 50}

# externally reported benchmark values, printed for side-by-side context only
REFERENCE_RESULTS = {
    "fno": {"bead_volume": {"rmse": 0.004058, "r2": 0.99954}, "max_temp": {"rmse": 15.497, "r2": 0.99927}},
    "dnn": {"bead_volume": {"rmse": 0.019712, "r2": 0.98921}, "max_temp": {"rmse": 42.327, "r2": 0.99458}},
}
REFERENCE_TRAIN_SECONDS = {"fno": 276.85, "dnn": 69.32}


class TrainingDivergedError(RuntimeError):
    """The training loss or a gradient became non-finite."""


class EmptyDatasetError(ValueError):
    """No simulated sample produced a melt pool."""


class SchemaVersionError(ValueError):
    """A dataset file was written with an incompatible schema version."""


# ---------------------------------------------------------------------------
# sampling and simulation
# ---------------------------------------------------------------------------


def sample_parameters(n: int, seed: int, bounds=None) -> list[thermal.ProcessParameters]:
    """n independent uniform draws per parameter inside its operating bounds."""
    if n < 1:
        raise ValueError("need at least one sample")
    bounds = bounds or thermal.PARAMETER_BOUNDS
    lows = np.array([bounds[name][0] for name in PARAM_NAMES])
    highs = np.array([bounds[name][1] for name in PARAM_NAMES])
    draws = np.random.default_rng(seed).uniform(lows, highs, size=(n, len(PARAM_NAMES)))
    return [thermal.ProcessParameters.from_array(row) for row in draws]


@dataclass
class Dataset:
    """Raw inputs/targets, split indices, and training-split normalization stats."""

    inputs: np.ndarray          # (n, 5) raw parameter values
    scalar_targets: np.ndarray  # (n, 2) bead volume (mm^3), max temperature (K)
    series_targets: np.ndarray  # (n, 2, n_steps) cumulative volume and max-temperature series
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    input_stats: "NormStats"
    scalar_stats: "NormStats"
    series_stats: "NormStats"
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_steps(self) -> int:
        return self.series_targets.shape[-1]

    @property
    def provenance(self) -> str:
        return self.meta.get("provenance", "")


def dataset_provenance(props, grid, seed: int, n_requested: int) -> str:
    payload = {
        "config": thermal.config_to_dict(props, grid),
        "seed": seed,
        "n_requested": n_requested,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def generate_dataset(
    n: int,
    seed: int,
    props: thermal.MaterialProperties,
    grid: thermal.SimGrid,
    on_diverged: str = "raise",
    progress=None,
) -> Dataset:
    """Simulate ``n`` sampled runs, keep the melted ones, split, and fit stats.

    ``on_diverged="drop"`` skips diverged samples (counted in the metadata)
    instead of propagating; the sampling seed also drives the split.
    """
    sample_seed, split_seed = np.random.SeedSequence(seed).spawn(2)
    draws = np.random.default_rng(sample_seed).uniform(
        [thermal.PARAMETER_BOUNDS[p][0] for p in PARAM_NAMES],
        [thermal.PARAMETER_BOUNDS[p][1] for p in PARAM_NAMES],
        size=(n, len(PARAM_NAMES)),
    )
    inputs, scalars, series = [], [], []
    n_diverged = 0
    for i, row in enumerate(draws):
        params = thermal.ProcessParameters.from_array(row)
        try:
            record = thermal.run(params, props, grid)
        except thermal.SimulationDivergedError as exc:
            if on_diverged == "drop":
                n_diverged += 1
                continue
            raise thermal.SimulationDivergedError(f"sample {i}: {exc}") from exc
        if not record.melted:
            continue
        inputs.append(row)
        scalars.append([record.bead_volume, record.max_temp])
        series.append(np.stack([record.series_volume, record.series_temp]))
        if progress is not None:
            progress(i, len(inputs))
    if not inputs:
        raise EmptyDatasetError(f"none of the {n} samples produced a melt pool")
    inputs = np.asarray(inputs)
    scalars = np.asarray(scalars)
    series = np.asarray(series)
    train_idx, val_idx, test_idx = split_indices(len(inputs), split_seed)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "n_requested": n,
        "n_retained": int(len(inputs)),
        "n_diverged": n_diverged,
        "config": thermal.config_to_dict(props, grid),
        "provenance": dataset_provenance(props, grid, seed, n),
        "param_names": list(PARAM_NAMES),
        "qoi_names": list(QOI_NAMES),
    }
    return Dataset(
        inputs=inputs,
        scalar_targets=scalars,
        series_targets=series,
        train_idx=train_idx,
        val_idx=val_idx,
        test_idx=test_idx,
        input_stats=normalize_fit(inputs[train_idx]),
        scalar_stats=normalize_fit(scalars[train_idx]),
        series_stats=normalize_fit(series[train_idx], channel_axis=1),
        meta=meta,
    )


def split_indices(n: int, seed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shuffled 80/10/10 split: sizes floor(0.8 n), floor(0.1 n), remainder."""
    if n < 10:
        raise ValueError(f"need at least 10 samples to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(0.8 * n)
    n_val = int(0.1 * n)
    return (
        np.sort(perm[:n_train]),
        np.sort(perm[n_train : n_train + n_val]),
        np.sort(perm[n_train + n_val :]),
    )


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormStats:
    """Per-channel mean and population standard deviation from training rows."""

    mean: np.ndarray
    std: np.ndarray


def normalize_fit(values: np.ndarray, channel_axis: int = -1) -> NormStats:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot fit normalization statistics on an empty set")
    flat = np.moveaxis(values, channel_axis, -1).reshape(-1, values.shape[channel_axis])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)  # population convention
    std = np.where(std > 0.0, std, 1.0)
    return NormStats(mean=mean, std=std)


def normalize_apply(stats: NormStats, values: np.ndarray, channel_axis: int = -1) -> np.ndarray:
    moved = np.moveaxis(np.asarray(values, dtype=np.float64), channel_axis, -1)
    return np.moveaxis((moved - stats.mean) / stats.std, -1, channel_axis)


def denormalize(stats: NormStats, values: np.ndarray, channel_axis: int = -1) -> np.ndarray:
    moved = np.moveaxis(np.asarray(values, dtype=np.float64), channel_axis, -1)
    return np.moveaxis(moved * stats.std + stats.mean, -1, channel_axis)


# ---------------------------------------------------------------------------
# series resampling between physical steps and the operator grid
# ---------------------------------------------------------------------------


def series_to_grid(series: np.ndarray, grid_n: int) -> np.ndarray:
    """Linear interpolation of (n, c, T) series onto grid_n points over [0, 1]."""
    series = np.asarray(series, dtype=np.float64)
    old = np.linspace(0.0, 1.0, series.shape[-1])
    new = np.linspace(0.0, 1.0, grid_n)
    out = np.empty(series.shape[:-1] + (grid_n,))
    for idx in np.ndindex(series.shape[:-1]):
        out[idx] = np.interp(new, old, series[idx])
    return out


def grid_to_series(fields: np.ndarray, n_steps: int) -> np.ndarray:
    """Inverse resampling of (n, c, grid_n) fields back to n_steps points."""
    fields = np.asarray(fields, dtype=np.float64)
    old = np.linspace(0.0, 1.0, fields.shape[-1])
    new = np.linspace(0.0, 1.0, n_steps)
    out = np.empty(fields.shape[:-1] + (n_steps,))
    for idx in np.ndindex(fields.shape[:-1]):
        out[idx] = np.interp(new, old, fields[idx])
    return out


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def rmse(pred: np.ndarray, true: np.ndarray) -> np.ndarray:
    """Root-mean-square error per column."""
    pred, true = _check_metric_shapes(pred, true)
    return np.sqrt(np.mean((pred - true) ** 2, axis=0))


def r2(pred: np.ndarray, true: np.ndarray) -> np.ndarray:
    """Coefficient of determination 1 - SS_res/SS_tot per column.

    A column with zero variance gets 1.0 on exact predictions, -inf otherwise.
    """
    pred, true = _check_metric_shapes(pred, true)
    ss_res = np.sum((pred - true) ** 2, axis=0)
    ss_tot = np.sum((true - true.mean(axis=0)) ** 2, axis=0)
    out = np.empty(pred.shape[1])
    for j in range(pred.shape[1]):
        if ss_tot[j] > 0.0:
            out[j] = 1.0 - ss_res[j] / ss_tot[j]
        else:
            out[j] = 1.0 if ss_res[j] == 0.0 else -np.inf
    return out


def abs_rel_err(pred: np.ndarray, true: np.ndarray) -> tuple[np.ndarray, int]:
    """|pred - true| / |true| per entry; zero-valued truths are NaN and counted."""
    pred, true = _check_metric_shapes(pred, true)
    nonzero = true != 0.0
    out = np.full(pred.shape, np.nan)
    out[nonzero] = np.abs(pred[nonzero] - true[nonzero]) / np.abs(true[nonzero])
    return out, int(np.count_nonzero(~nonzero))


def _check_metric_shapes(pred, true):
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    true = np.atleast_2d(np.asarray(true, dtype=np.float64))
    if pred.shape != true.shape:
        raise ValueError(f"prediction shape {pred.shape} != truth shape {true.shape}")
    return pred, true


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Hyperparameters; learning rate and mode count default per model kind."""

    model_kind: str = "fno"
    epochs: int = 512
    lr: float | None = None
    batch_size: int = 32
    seed: int = 0
    n_layers: int = 4
    n_modes: int | None = None
    width: int = 64
    grid_n: int = 256

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")
        if self.lr is not None and self.lr < 0:
            raise ValueError("learning rate must be >= 0")

    @property
    def resolved_lr(self) -> float:
        return DEFAULT_LR[self.model_kind] if self.lr is None else self.lr

    @property
    def resolved_modes(self) -> int:
        if self.model_kind == "dnn":
            return 0
        return DEFAULT_MODES[self.model_kind] if self.n_modes is None else self.n_modes

    def fno_config(self) -> fno.FnoConfig:
        return fno.FnoConfig(
            n_layers=self.n_layers,
            n_modes=self.resolved_modes,
            width=self.width,
            grid_n=self.grid_n,
            in_channels=6,
            out_channels=2,
        )

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "epochs": self.epochs,
            "lr": self.resolved_lr,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "n_layers": self.n_layers,
            "n_modes": self.resolved_modes,
            "width": self.width,
            "grid_n": self.grid_n,
        }


@dataclass
class TrainResult:
    model_kind: str
    model: object  # FnoModel or MlpModel
    train_mse: np.ndarray  # per-epoch training loss (normalized units)
    val_mse: np.ndarray
    seconds: float
    config: TrainConfig


def _fno_batch_loss(config, fields, targets_scalar):
    def loss_and_grads(params):
        model = fno.FnoModel(config, params)
        out, cache = fno.fno_forward(model, fields, return_cache=True)
        pred = fno.readout_scalar(out)
        g_pred = mse_grad(pred, targets_scalar)
        g_out = np.broadcast_to(g_pred[:, :, None] / out.shape[-1], out.shape)
        return mse(pred, targets_scalar), fno.fno_backward(model, cache, g_out)

    return loss_and_grads


def _fno_series_batch_loss(config, fields, target_fields):
    def loss_and_grads(params):
        model = fno.FnoModel(config, params)
        out, cache = fno.fno_forward(model, fields, return_cache=True)
        return mse(out, target_fields), fno.fno_backward(model, cache, mse_grad(out, target_fields))

    return loss_and_grads


def _dnn_batch_loss(model_template, x, targets):
    def loss_and_grads(params):
        model = model_template.with_params(params)
        out, cache = mlp.mlp_forward(model, x, return_cache=True)
        return mse(out, targets), mlp.mlp_backward(model, cache, mse_grad(out, targets))

    return loss_and_grads


def train(dataset: Dataset, config: TrainConfig) -> TrainResult:
    """Train one model kind with per-epoch shuffled minibatches and Adam.

    Training runs the full epoch budget (no early stopping); the validation
    split is evaluated once per epoch for the learning curve only.
    """
    start = time.perf_counter()
    init_seed, shuffle_seed = np.random.SeedSequence(config.seed).spawn(2)
    x_norm = normalize_apply(dataset.input_stats, dataset.inputs)
    if config.model_kind == "dnn":
        train_x = x_norm[dataset.train_idx]
        val_x = x_norm[dataset.val_idx]
        model = mlp.MlpModel.init(seed=init_seed)
        make_loss = lambda bx, by: _dnn_batch_loss(model, bx, by)
        eval_loss = lambda params, vx, vy: mse(mlp.mlp_forward(model.with_params(params), vx), vy)
        train_y = normalize_apply(dataset.scalar_stats, dataset.scalar_targets)[dataset.train_idx]
        val_y = normalize_apply(dataset.scalar_stats, dataset.scalar_targets)[dataset.val_idx]
    else:
        fno_cfg = config.fno_config()
        fields = fno.encode_input(x_norm, fno_cfg.grid_n)
        train_x = fields[dataset.train_idx]
        val_x = fields[dataset.val_idx]
        fno_model = fno.FnoModel.init(fno_cfg, seed=init_seed)
        model = fno_model
        if config.model_kind == "fno":
            y_norm = normalize_apply(dataset.scalar_stats, dataset.scalar_targets)
            make_loss = lambda bx, by: _fno_batch_loss(fno_cfg, bx, by)

            def eval_loss(params, vx, vy):
                out = fno.fno_forward(fno.FnoModel(fno_cfg, params), vx)
                return mse(fno.readout_scalar(out), vy)

        else:  # fno-series
            norm_series = normalize_apply(dataset.series_stats, dataset.series_targets, channel_axis=1)
            y_norm = series_to_grid(norm_series, fno_cfg.grid_n)
            make_loss = lambda bx, by: _fno_series_batch_loss(fno_cfg, bx, by)

            def eval_loss(params, vx, vy):
                return mse(fno.fno_forward(fno.FnoModel(fno_cfg, params), vx), vy)

        train_y = y_norm[dataset.train_idx]
        val_y = y_norm[dataset.val_idx]

    params = dict(model.params)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(shuffle_seed)
    n_train = len(train_x)
    train_hist = np.empty(config.epochs)
    val_hist = np.empty(config.epochs)
    lr = config.resolved_lr
    for epoch in range(config.epochs):
        perm = rng.permutation(n_train)
        total = 0.0
        for lo in range(0, n_train, config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            loss, grads = make_loss(train_x[idx], train_y[idx])(params)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"training loss became non-finite at epoch {epoch}")
            try:
                params, state = adam_update(params, grads, state, lr)
            except NonFiniteGradientError as exc:
                raise TrainingDivergedError(f"non-finite gradient at epoch {epoch}: {exc}") from exc
            total += loss * len(idx)
        train_hist[epoch] = total / n_train
        val_hist[epoch] = eval_loss(params, val_x, val_y)
    model = model.with_params(params)
    return TrainResult(
        model_kind=config.model_kind,
        model=model,
        train_mse=train_hist,
        val_mse=val_hist,
        seconds=time.perf_counter() - start,
        config=config,
    )


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    """Test-split metrics in physical units plus the learning curves."""

    model_kind: str
    qoi_names: tuple
    rmse: np.ndarray             # per QoI
    r2: np.ndarray               # per QoI
    abs_rel: np.ndarray          # (n_test, n_qoi), NaN where the truth is zero
    n_rel_excluded: int
    predictions: np.ndarray      # (n_test, n_qoi) denormalized
    targets: np.ndarray
    test_idx: np.ndarray
    train_mse: np.ndarray
    val_mse: np.ndarray
    train_seconds: float


def predict_scalar(
    model_kind: str, model, input_stats: NormStats, scalar_stats: NormStats, rows: np.ndarray
) -> np.ndarray:
    """Denormalized (n, 2) scalar predictions for raw parameter rows."""
    x_norm = normalize_apply(input_stats, rows)
    if model_kind == "dnn":
        pred_norm = mlp.mlp_forward(model, x_norm)
    elif model_kind == "fno":
        fields = fno.encode_input(x_norm, model.config.grid_n)
        pred_norm = fno.readout_scalar(fno.fno_forward(model, fields))
    else:
        raise ValueError(f"scalar prediction is not defined for model kind {model_kind!r}")
    return denormalize(scalar_stats, pred_norm)


def predict_series(
    model, input_stats: NormStats, series_stats: NormStats, rows: np.ndarray, n_steps: int
) -> np.ndarray:
    """Denormalized (n, 2, n_steps) series predictions for raw parameter rows."""
    x_norm = normalize_apply(input_stats, rows)
    fields = fno.encode_input(x_norm, model.config.grid_n)
    out = fno.fno_forward(model, fields)
    series_norm = grid_to_series(out, n_steps)
    return denormalize(series_stats, series_norm, channel_axis=1)


def evaluate_scalar(result: TrainResult, dataset: Dataset) -> EvalReport:
    rows = dataset.inputs[dataset.test_idx]
    pred = predict_scalar(result.model_kind, result.model, dataset.input_stats, dataset.scalar_stats, rows)
    true = dataset.scalar_targets[dataset.test_idx]
    rel, n_excluded = abs_rel_err(pred, true)
    return EvalReport(
        model_kind=result.model_kind,
        qoi_names=QOI_NAMES,
        rmse=rmse(pred, true),
        r2=r2(pred, true),
        abs_rel=rel,
        n_rel_excluded=n_excluded,
        predictions=pred,
        targets=true,
        test_idx=dataset.test_idx,
        train_mse=result.train_mse,
        val_mse=result.val_mse,
        train_seconds=result.seconds,
    )


@dataclass
class SeriesReport:
    """Per-sample series errors of the time-series operator on the test split."""

    per_sample_rmse: np.ndarray   # (n_test, 2) raw units over the decoded series
    rel_l2: np.ndarray            # (n_test, 2) relative L2 per channel
    median_rel_l2: np.ndarray     # (2,)
    predictions: np.ndarray       # (n_test, 2, n_steps)
    targets: np.ndarray
    test_idx: np.ndarray
    train_mse: np.ndarray
    val_mse: np.ndarray
    train_seconds: float


def evaluate_series(result: TrainResult, dataset: Dataset) -> SeriesReport:
    rows = dataset.inputs[dataset.test_idx]
    pred = predict_series(
        result.model, dataset.input_stats, dataset.series_stats, rows, dataset.n_steps
    )
    true = dataset.series_targets[dataset.test_idx]
    diff = pred - true
    per_sample_rmse = np.sqrt(np.mean(diff**2, axis=-1))
    true_norm = np.sqrt(np.sum(true**2, axis=-1))
    rel_l2 = np.sqrt(np.sum(diff**2, axis=-1)) / np.where(true_norm > 0, true_norm, 1.0)
    return SeriesReport(
        per_sample_rmse=per_sample_rmse,
        rel_l2=rel_l2,
        median_rel_l2=np.median(rel_l2, axis=0),
        predictions=pred,
        targets=true,
        test_idx=dataset.test_idx,
        train_mse=result.train_mse,
        val_mse=result.val_mse,
        train_seconds=result.seconds,
    )


@dataclass
class BenchmarkResult:
    fno_report: EvalReport
    dnn_report: EvalReport


def benchmark(dataset: Dataset, fno_config: TrainConfig, dnn_config: TrainConfig) -> BenchmarkResult:
    """Train both scalar models and evaluate them on the shared test split."""
    if fno_config.model_kind != "fno" or dnn_config.model_kind != "dnn":
        raise ValueError("benchmark expects one 'fno' and one 'dnn' configuration")
    fno_result = train(dataset, fno_config)
    dnn_result = train(dataset, dnn_config)
    return BenchmarkResult(
        fno_report=evaluate_scalar(fno_result, dataset),
        dnn_report=evaluate_scalar(dnn_result, dataset),
    )


def train_series(dataset: Dataset, config: TrainConfig) -> tuple[TrainResult, SeriesReport]:
    """Train the time-series operator and report per-sample series errors."""
    if config.model_kind != "fno-series":
        raise ValueError("train_series expects a 'fno-series' configuration")
    result = train(dataset, config)
    return result, evaluate_series(result, dataset)


# ---------------------------------------------------------------------------
# dataset file I/O
# ---------------------------------------------------------------------------


def save_dataset(path, dataset: Dataset) -> None:
    arrays = {
        "inputs": dataset.inputs,
        "scalar_targets": dataset.scalar_targets,
        "series_targets": dataset.series_targets,
        "train_idx": dataset.train_idx.astype(np.int64),
        "val_idx": dataset.val_idx.astype(np.int64),
        "test_idx": dataset.test_idx.astype(np.int64),
        "input_mean": dataset.input_stats.mean,
        "input_std": dataset.input_stats.std,
        "scalar_mean": dataset.scalar_stats.mean,
        "scalar_std": dataset.scalar_stats.std,
        "series_mean": dataset.series_stats.mean,
        "series_std": dataset.series_stats.std,
    }
    save_container(path, dataset.meta, arrays)


def load_dataset(path) -> Dataset:
    meta, arrays = load_container(path)
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"dataset schema version {meta.get('schema_version')} is not supported "
            f"(expected {SCHEMA_VERSION})"
        )
    return Dataset(
        inputs=arrays["inputs"],
        scalar_targets=arrays["scalar_targets"],
        series_targets=arrays["series_targets"],
        train_idx=arrays["train_idx"],
        val_idx=arrays["val_idx"],
        test_idx=arrays["test_idx"],
        input_stats=NormStats(arrays["input_mean"], arrays["input_std"]),
        scalar_stats=NormStats(arrays["scalar_mean"], arrays["scalar_std"]),
        series_stats=NormStats(arrays["series_mean"], arrays["series_std"]),
        meta=meta,
    )
