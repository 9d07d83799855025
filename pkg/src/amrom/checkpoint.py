"""Model checkpoints: one container format for all model kinds.

A checkpoint stores the model-kind tag, architecture, training configuration,
all weight arrays, the normalization statistics needed to predict in physical
units, and the provenance hash of the dataset it was trained on.  Loading a
saved checkpoint reproduces predictions bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fno import FnoConfig, FnoModel
from .mlp import MlpModel
from .pipeline import Dataset, NormStats, TrainResult
from .storage import load_container, save_container

CHECKPOINT_KIND = "amrom-checkpoint"


@dataclass
class Checkpoint:
    model_kind: str
    model: object  # FnoModel or MlpModel
    input_stats: NormStats
    scalar_stats: NormStats
    series_stats: NormStats
    n_steps: int
    provenance: str
    train_config: dict
    meta: dict

    @property
    def is_series(self) -> bool:
        return self.model_kind == "fno-series"


def save_checkpoint(path, result: TrainResult, dataset: Dataset) -> None:
    model = result.model
    meta = {
        "kind": CHECKPOINT_KIND,
        "model_kind": result.model_kind,
        "train_config": result.config.to_dict(),
        "provenance": dataset.provenance,
        "n_steps": dataset.n_steps,
        "train_seconds": result.seconds,
    }
    if result.model_kind == "dnn":
        meta["layer_sizes"] = list(model.layer_sizes)
    else:
        meta["fno_config"] = model.config.to_dict()
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    arrays["history/train_mse"] = np.asarray(result.train_mse)
    arrays["history/val_mse"] = np.asarray(result.val_mse)
    for name, stats in (
        ("input", dataset.input_stats),
        ("scalar", dataset.scalar_stats),
        ("series", dataset.series_stats),
    ):
        arrays[f"stats/{name}_mean"] = stats.mean
        arrays[f"stats/{name}_std"] = stats.std
    save_container(path, meta, arrays)


def load_checkpoint(path) -> Checkpoint:
    meta, arrays = load_container(path)
    if meta.get("kind") != CHECKPOINT_KIND:
        raise ValueError(f"{path} is not a model checkpoint")
    params = {k[len("param/") :]: v for k, v in arrays.items() if k.startswith("param/")}
    model_kind = meta["model_kind"]
    if model_kind == "dnn":
        model = MlpModel(meta["layer_sizes"], params)
    else:
        model = FnoModel(FnoConfig.from_dict(meta["fno_config"]), params)
    return Checkpoint(
        model_kind=model_kind,
        model=model,
        input_stats=NormStats(arrays["stats/input_mean"], arrays["stats/input_std"]),
        scalar_stats=NormStats(arrays["stats/scalar_mean"], arrays["stats/scalar_std"]),
        series_stats=NormStats(arrays["stats/series_mean"], arrays["stats/series_std"]),
        n_steps=int(meta["n_steps"]),
        provenance=meta["provenance"],
        train_config=meta["train_config"],
        meta=meta,
    )
