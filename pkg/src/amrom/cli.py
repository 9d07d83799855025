"""Command-line driver: data generation, training, evaluation, and benchmarking.

Subcommands
-----------
gen-data    simulate parameter samples and write a dataset file
train       train one model kind on a dataset, write a checkpoint + loss CSV
eval        evaluate a checkpoint on a dataset's test split
predict     predict the outputs for five raw parameter values
benchmark   train and compare both scalar models side by side

Every artifact-producing path also renders PNG figures next to the CSVs.
Exit codes: 0 success, 2 usage/configuration error, 3 data error,
4 numeric divergence.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import pipeline, plotting, thermal
from .pipeline import (
    EmptyDatasetError,
    SchemaVersionError,
    TrainConfig,
    TrainingDivergedError,
)
from .storage import ContainerFormatError, atomic_write_text

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


class DataError(RuntimeError):
    """Input files are missing, inconsistent, or empty."""


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def _load_thermal_config(path):
    if path is None:
        return thermal.default_config()
    return thermal.load_config(path)


def _load_dataset(path) -> pipeline.Dataset:
    try:
        return pipeline.load_dataset(path)
    except FileNotFoundError as exc:
        raise DataError(f"dataset file not found: {path}") from exc


def _train_config_from_args(args) -> TrainConfig:
    kwargs = dict(model_kind=args.model, seed=args.seed)
    if args.epochs is not None:
        kwargs["epochs"] = args.epochs
    if args.lr is not None:
        kwargs["lr"] = args.lr
    if args.batch is not None:
        kwargs["batch_size"] = args.batch
    if args.modes is not None:
        kwargs["n_modes"] = args.modes
    if args.layers is not None:
        kwargs["n_layers"] = args.layers
    if args.width is not None:
        kwargs["width"] = args.width
    return TrainConfig(**kwargs)


def _write_loss_artifacts(stem: Path, label: str, train_mse, val_mse) -> None:
    _write_csv(
        stem.with_suffix(".loss.csv"),
        ["epoch", "train_mse", "val_mse"],
        [(i + 1, t, v) for i, (t, v) in enumerate(zip(train_mse, val_mse))],
    )
    plotting.save_learning_curves(stem.with_suffix(".loss.png"), {label: (train_mse, val_mse)})


def _scalar_report_rows(report: pipeline.EvalReport):
    rows = []
    for i, sample in enumerate(report.test_idx):
        row = [int(sample)]
        for j in range(len(report.qoi_names)):
            row.extend([report.targets[i, j], report.predictions[i, j], report.abs_rel[i, j]])
        rows.append(row)
    return rows


_SCALAR_CSV_HEADER = [
    "sample",
    "true_bead_volume_mm3",
    "pred_bead_volume_mm3",
    "abs_rel_bead_volume",
    "true_max_temp_K",
    "pred_max_temp_K",
    "abs_rel_max_temp",
]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    props, grid = _load_thermal_config(args.config)
    start = time.perf_counter()
    try:
        dataset = pipeline.generate_dataset(
            n=args.n, seed=args.seed, props=props, grid=grid, on_diverged="drop"
        )
    except EmptyDatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    pipeline.save_dataset(args.out, dataset)
    elapsed = time.perf_counter() - start
    dropped = args.n - dataset.n_samples
    print(
        f"requested {args.n} samples, retained {dataset.n_samples} "
        f"(no melt pool: {dropped - dataset.meta['n_diverged']}, diverged: {dataset.meta['n_diverged']})"
    )
    print(f"split train/val/test = {len(dataset.train_idx)}/{len(dataset.val_idx)}/{len(dataset.test_idx)}")
    print(f"wrote {args.out} in {elapsed:.1f} s")
    return EXIT_OK


def cmd_train(args) -> int:
    dataset = _load_dataset(args.dataset)
    config = _train_config_from_args(args)
    result = pipeline.train(dataset, config)
    out = Path(args.out)
    ckpt.save_checkpoint(out, result, dataset)
    _write_loss_artifacts(out, config.model_kind, result.train_mse, result.val_mse)
    print(f"trained {config.model_kind} for {config.epochs} epochs in {result.seconds:.1f} s")
    print(f"final train MSE {result.train_mse[-1]:.3e}, val MSE {result.val_mse[-1]:.3e}")
    print(f"wrote {out}, {out.with_suffix('.loss.csv')}, {out.with_suffix('.loss.png')}")
    return EXIT_OK


def _check_provenance(loaded: ckpt.Checkpoint, dataset: pipeline.Dataset, allow_mismatch: bool) -> None:
    if loaded.provenance != dataset.provenance:
        message = (
            f"checkpoint provenance {loaded.provenance} does not match dataset "
            f"provenance {dataset.provenance}"
        )
        if not allow_mismatch:
            raise DataError(message + " (pass --allow-mismatch to evaluate anyway)")
        print(f"warning: {message}", file=sys.stderr)


def cmd_eval(args) -> int:
    dataset = _load_dataset(args.dataset)
    loaded = ckpt.load_checkpoint(args.checkpoint)
    _check_provenance(loaded, dataset, args.allow_mismatch)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if loaded.is_series:
        rows = dataset.inputs[dataset.test_idx]
        pred = pipeline.predict_series(
            loaded.model, loaded.input_stats, loaded.series_stats, rows, dataset.n_steps
        )
        true = dataset.series_targets[dataset.test_idx]
        diff = pred - true
        per_sample_rmse = np.sqrt(np.mean(diff**2, axis=-1))
        norm = np.sqrt(np.sum(true**2, axis=-1))
        rel_l2 = np.sqrt(np.sum(diff**2, axis=-1)) / np.where(norm > 0, norm, 1.0)
        _write_csv(
            out_dir / "summary.csv",
            ["qoi", "median_series_rmse", "mean_series_rmse", "median_rel_l2"],
            [
                (name, np.median(per_sample_rmse[:, j]), per_sample_rmse[:, j].mean(), np.median(rel_l2[:, j]))
                for j, name in enumerate(pipeline.QOI_NAMES)
            ],
        )
        _write_csv(
            out_dir / "per_sample.csv",
            ["sample", "rmse_bead_volume_mm3", "rel_l2_bead_volume", "rmse_max_temp_K", "rel_l2_max_temp"],
            [
                (int(s), per_sample_rmse[i, 0], rel_l2[i, 0], per_sample_rmse[i, 1], rel_l2[i, 1])
                for i, s in enumerate(dataset.test_idx)
            ],
        )
        plotting.save_series_rmse(out_dir / "series_rmse.png", per_sample_rmse,
                                  pipeline.QOI_NAMES, pipeline.QOI_UNITS)
        plotting.save_series_overlay(out_dir / "series_overlay.png", true[0], pred[0],
                                     pipeline.QOI_NAMES, pipeline.QOI_UNITS)
        print(f"median series RMSE: volume {np.median(per_sample_rmse[:, 0]):.4g} mm^3, "
              f"temperature {np.median(per_sample_rmse[:, 1]):.4g} K")
    else:
        rows = dataset.inputs[dataset.test_idx]
        pred = pipeline.predict_scalar(
            loaded.model_kind, loaded.model, loaded.input_stats, loaded.scalar_stats, rows
        )
        true = dataset.scalar_targets[dataset.test_idx]
        rel, n_excluded = pipeline.abs_rel_err(pred, true)
        rmse_v = pipeline.rmse(pred, true)
        r2_v = pipeline.r2(pred, true)
        _write_csv(
            out_dir / "summary.csv",
            ["model", "qoi", "rmse", "r2"],
            [
                (loaded.model_kind, name, rmse_v[j], r2_v[j])
                for j, name in enumerate(pipeline.QOI_NAMES)
            ],
        )
        report_rows = []
        for i, sample in enumerate(dataset.test_idx):
            report_rows.append(
                [int(sample), true[i, 0], pred[i, 0], rel[i, 0], true[i, 1], pred[i, 1], rel[i, 1]]
            )
        _write_csv(out_dir / "per_sample.csv", _SCALAR_CSV_HEADER, report_rows)
        plotting.save_parity(out_dir / "parity.png", {loaded.model_kind: (true, pred)},
                             pipeline.QOI_NAMES, pipeline.QOI_UNITS)
        plotting.save_error_comparison(out_dir / "abs_rel_error.png",
                                       {loaded.model_kind: rel}, pipeline.QOI_NAMES)
        if n_excluded:
            print(f"note: {n_excluded} zero-valued truths excluded from relative errors")
        for j, name in enumerate(pipeline.QOI_NAMES):
            print(f"{loaded.model_kind} {name}: RMSE {rmse_v[j]:.6g}, R^2 {r2_v[j]:.6g}")
    print(f"wrote report files to {out_dir}")
    return EXIT_OK


def cmd_predict(args) -> int:
    loaded = ckpt.load_checkpoint(args.checkpoint)
    values = np.array(args.params, dtype=np.float64)
    for name, value in zip(pipeline.PARAM_NAMES, values):
        lo, hi = thermal.PARAMETER_BOUNDS[name]
        if not lo <= value <= hi:
            print(
                f"warning: {name}={value:g} is outside the trained range [{lo:g}, {hi:g}]; "
                "this is an extrapolation",
                file=sys.stderr,
            )
    rows = values[None, :]
    if loaded.is_series:
        series = pipeline.predict_series(
            loaded.model, loaded.input_stats, loaded.series_stats, rows, loaded.n_steps
        )[0]
        print(f"predicted final bead volume: {series[0, -1]:.6g} mm^3")
        print(f"predicted peak of max melt pool temperature: {series[1].max():.6g} K")
        if args.csv:
            _write_csv(
                args.csv,
                ["step", "bead_volume_mm3", "max_temp_K"],
                [(i + 1, series[0, i], series[1, i]) for i in range(series.shape[-1])],
            )
            print(f"wrote {series.shape[-1]}-step series to {args.csv}")
    else:
        pred = pipeline.predict_scalar(
            loaded.model_kind, loaded.model, loaded.input_stats, loaded.scalar_stats, rows
        )[0]
        print(f"predicted bead volume: {pred[0]:.6g} mm^3")
        print(f"predicted max melt pool temperature: {pred[1]:.6g} K")
        if args.csv:
            _write_csv(args.csv, ["bead_volume_mm3", "max_temp_K"], [(pred[0], pred[1])])
            print(f"wrote prediction to {args.csv}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    dataset = _load_dataset(args.dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    epochs = {} if args.epochs is None else {"epochs": args.epochs}
    result = pipeline.benchmark(
        dataset,
        TrainConfig(model_kind="fno", seed=args.seed, **epochs),
        TrainConfig(model_kind="dnn", seed=args.seed, **epochs),
    )
    reports = {"fno": result.fno_report, "dnn": result.dnn_report}
    ref = pipeline.REFERENCE_RESULTS
    summary_rows = []
    for j, name in enumerate(pipeline.QOI_NAMES):
        summary_rows.append(
            (
                name,
                reports["fno"].rmse[j], reports["fno"].r2[j],
                reports["dnn"].rmse[j], reports["dnn"].r2[j],
                ref["fno"][name]["rmse"], ref["fno"][name]["r2"],
                ref["dnn"][name]["rmse"], ref["dnn"][name]["r2"],
            )
        )
    _write_csv(
        out_dir / "summary.csv",
        ["qoi", "fno_rmse", "fno_r2", "dnn_rmse", "dnn_r2",
         "reference_fno_rmse", "reference_fno_r2", "reference_dnn_rmse", "reference_dnn_r2"],
        summary_rows,
    )
    for label, report in reports.items():
        _write_csv(out_dir / f"per_sample_{label}.csv", _SCALAR_CSV_HEADER, _scalar_report_rows(report))
        _write_csv(
            out_dir / f"loss_{label}.csv",
            ["epoch", "train_mse", "val_mse"],
            [(i + 1, t, v) for i, (t, v) in enumerate(zip(report.train_mse, report.val_mse))],
        )
    plotting.save_learning_curves(
        out_dir / "learning_curves.png",
        {label: (r.train_mse, r.val_mse) for label, r in reports.items()},
    )
    plotting.save_parity(
        out_dir / "parity.png",
        {label: (r.targets, r.predictions) for label, r in reports.items()},
        pipeline.QOI_NAMES, pipeline.QOI_UNITS,
    )
    plotting.save_error_comparison(
        out_dir / "abs_rel_error.png",
        {label: r.abs_rel for label, r in reports.items()},
        pipeline.QOI_NAMES,
    )
    print(f"{'QoI':<26} {'FNO RMSE':>12} {'FNO R^2':>10} {'DNN RMSE':>12} {'DNN R^2':>10}")
    for j, name in enumerate(pipeline.QOI_NAMES):
        print(
            f"{name:<26} {reports['fno'].rmse[j]:>12.6g} {reports['fno'].r2[j]:>10.6f} "
            f"{reports['dnn'].rmse[j]:>12.6g} {reports['dnn'].r2[j]:>10.6f}"
        )
        print(
            f"{'  (reference)':<26} {ref['fno'][name]['rmse']:>12.6g} {ref['fno'][name]['r2']:>10.6f} "
            f"{ref['dnn'][name]['rmse']:>12.6g} {ref['dnn'][name]['r2']:>10.6f}"
        )
    for label, report in reports.items():
        print(
            f"{label} training time: {report.train_seconds:.2f} s "
            f"(reference: {pipeline.REFERENCE_TRAIN_SECONDS[label]:.2f} s)"
        )
    print(f"wrote benchmark files to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amrom",
        description="Surrogate models for a moving-laser deposition thermal simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="simulate samples and write a dataset file")
    p.add_argument("--config", help="thermal config JSON (default: packaged reference config)")
    p.add_argument("--n", type=int, default=500, help="number of parameter samples to simulate")
    p.add_argument("--seed", type=int, default=0, help="sampling and split seed")
    p.add_argument("--out", default="dataset.bin", help="output dataset file path")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a surrogate and write a checkpoint")
    p.add_argument("--dataset", required=True, help="dataset file from gen-data")
    p.add_argument("--model", required=True, choices=pipeline.MODEL_KINDS, help="model kind")
    p.add_argument("--epochs", type=int, help="training epochs (default 512)")
    p.add_argument("--lr", type=float, help="learning rate (default 0.001 fno, 0.007 dnn)")
    p.add_argument("--batch", type=int, help="minibatch size (default 32)")
    p.add_argument("--modes", type=int, help="retained Fourier modes (default 5 fno, 50 fno-series)")
    p.add_argument("--layers", type=int, help="Fourier layer count (default 4; fno kinds only)")
    p.add_argument("--width", type=int, help="hidden channel count (default 64; fno kinds only)")
    p.add_argument("--seed", type=int, default=0, help="initialization and shuffling seed")
    p.add_argument("--out", default="model.ckpt", help="output checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset's test split")
    p.add_argument("--dataset", required=True, help="dataset file")
    p.add_argument("--checkpoint", required=True, help="checkpoint file from train")
    p.add_argument("--out", default="eval-report", help="output directory for report files")
    p.add_argument(
        "--allow-mismatch",
        action="store_true",
        help="continue with a warning when checkpoint/dataset provenance differs",
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict outputs for raw parameter values")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument(
        "params",
        type=float,
        nargs=5,
        metavar="PARAM",
        help="five values in order: laser power (W), scan speed (mm/ms), "
        "beam radius (mm), efficiency (-), scaling (-)",
    )
    p.add_argument("--csv", help="optional CSV output path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="train and compare both scalar surrogates")
    p.add_argument("--dataset", required=True, help="dataset file")
    p.add_argument("--out", default="benchmark-report", help="output directory")
    p.add_argument("--seed", type=int, default=0, help="training seed shared by both models")
    p.add_argument("--epochs", type=int, help="override the 512-epoch default for both models")
    p.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, EmptyDatasetError, SchemaVersionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDivergedError, thermal.SimulationDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, ContainerFormatError, thermal.UnstableTimeStepError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
