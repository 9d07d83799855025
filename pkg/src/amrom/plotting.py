"""Figure rendering for reports: learning curves, parity, error, and series plots.

All figures are written atomically as PNG next to the CSV artifacts they
illustrate.  The matplotlib Agg backend is forced so rendering works headless.
"""

from __future__ import annotations

import io

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .storage import atomic_write_bytes  # noqa: E402

plt.rcParams.update(
    {
        "figure.dpi": 120,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 9,
        "axes.titlesize": 10,
        "legend.fontsize": 8,
    }
)

_COLORS = {"fno": "tab:blue", "dnn": "tab:orange"}


def _save(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", bbox_inches="tight")
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def save_learning_curves(path, curves: dict) -> None:
    """``curves`` maps a model label to (training, validation) per-epoch MSE arrays."""
    fig, axes = plt.subplots(1, len(curves), figsize=(4.2 * len(curves), 3.2), squeeze=False)
    for ax, (label, (train_mse, val_mse)) in zip(axes[0], curves.items()):
        epochs = np.arange(1, len(train_mse) + 1)
        ax.plot(epochs, train_mse, label="training", color=_COLORS.get(label, "tab:blue"))
        ax.plot(epochs, val_mse, label="validation", color="tab:red", alpha=0.7)
        if min(np.min(train_mse), np.min(val_mse)) > 0:
            ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("MSE (normalized)")
        ax.set_title(label.upper())
        ax.legend()
    _save(fig, path)


def save_parity(path, entries: dict, qoi_names, qoi_units) -> None:
    """Predicted-versus-true scatter; ``entries`` maps label -> (true, pred) arrays."""
    n_qoi = len(qoi_names)
    fig, axes = plt.subplots(1, n_qoi, figsize=(4.2 * n_qoi, 3.6), squeeze=False)
    for j, ax in enumerate(axes[0]):
        lo, hi = np.inf, -np.inf
        for label, (true, pred) in entries.items():
            ax.scatter(true[:, j], pred[:, j], s=14, alpha=0.75,
                       label=label.upper(), color=_COLORS.get(label))
            lo = min(lo, true[:, j].min(), pred[:, j].min())
            hi = max(hi, true[:, j].max(), pred[:, j].max())
        ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
        ax.set_xlabel(f"simulated {qoi_names[j]} ({qoi_units[j]})")
        ax.set_ylabel(f"predicted {qoi_names[j]} ({qoi_units[j]})")
        ax.legend()
    _save(fig, path)


def save_error_comparison(path, entries: dict, qoi_names) -> None:
    """Per-test-sample absolute relative error; ``entries`` maps label -> (n, n_qoi)."""
    n_qoi = len(qoi_names)
    fig, axes = plt.subplots(1, n_qoi, figsize=(4.6 * n_qoi, 3.2), squeeze=False)
    for j, ax in enumerate(axes[0]):
        positive = True
        for label, rel in entries.items():
            ax.plot(np.arange(rel.shape[0]), rel[:, j], "o-", ms=3, lw=0.7,
                    alpha=0.8, label=label.upper(), color=_COLORS.get(label))
            with np.errstate(invalid="ignore"):
                positive = positive and bool(np.nanmin(rel[:, j]) > 0)
        if positive:
            ax.set_yscale("log")
        ax.set_xlabel("test sample")
        ax.set_ylabel("absolute relative error")
        ax.set_title(qoi_names[j])
        ax.legend()
    _save(fig, path)


def save_series_overlay(path, true_series, pred_series, qoi_names, qoi_units) -> None:
    """Predicted and simulated time series for one sample, one panel per channel."""
    n_ch = true_series.shape[0]
    fig, axes = plt.subplots(1, n_ch, figsize=(4.6 * n_ch, 3.2), squeeze=False)
    steps = np.arange(true_series.shape[-1])
    for ch, ax in enumerate(axes[0]):
        ax.plot(steps, true_series[ch], label="simulated", color="k", lw=1.2)
        ax.plot(steps, pred_series[ch], label="predicted", color="tab:blue", ls="--")
        ax.set_xlabel("time step")
        ax.set_ylabel(f"{qoi_names[ch]} ({qoi_units[ch]})")
        ax.legend()
    _save(fig, path)


def save_series_rmse(path, per_sample_rmse, qoi_names, qoi_units) -> None:
    """Per-test-sample RMSE of the series prediction, one panel per channel."""
    n_ch = per_sample_rmse.shape[1]
    fig, axes = plt.subplots(1, n_ch, figsize=(4.6 * n_ch, 3.2), squeeze=False)
    samples = np.arange(per_sample_rmse.shape[0])
    for ch, ax in enumerate(axes[0]):
        ax.bar(samples, per_sample_rmse[:, ch], color="tab:blue", width=0.8)
        ax.set_xlabel("test sample")
        ax.set_ylabel(f"series RMSE ({qoi_units[ch]})")
        ax.set_title(qoi_names[ch])
    _save(fig, path)
