"""Checkpoint round trips must reproduce predictions bit-exactly."""

import numpy as np
import pytest

from amrom import pipeline
from amrom.checkpoint import load_checkpoint, save_checkpoint
from amrom.pipeline import TrainConfig
from amrom.storage import save_container

FAST_FNO = dict(n_layers=2, n_modes=3, width=8, grid_n=32)


@pytest.mark.parametrize(
    "kind,extra",
    [("fno", FAST_FNO), ("dnn", {}), ("fno-series", FAST_FNO)],
)
def test_round_trip_predictions_bit_identical(tmp_path, small_dataset, kind, extra):
    config = TrainConfig(model_kind=kind, epochs=2, seed=3, **extra)
    result = pipeline.train(small_dataset, config)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, result, small_dataset)
    loaded = load_checkpoint(path)

    assert loaded.model_kind == kind
    assert loaded.provenance == small_dataset.provenance
    for key, value in result.model.params.items():
        assert np.array_equal(loaded.model.params[key], value)

    rows = small_dataset.inputs[small_dataset.test_idx]
    if kind == "fno-series":
        before = pipeline.predict_series(
            result.model, small_dataset.input_stats, small_dataset.series_stats, rows, small_dataset.n_steps
        )
        after = pipeline.predict_series(
            loaded.model, loaded.input_stats, loaded.series_stats, rows, loaded.n_steps
        )
    else:
        before = pipeline.predict_scalar(
            kind, result.model, small_dataset.input_stats, small_dataset.scalar_stats, rows
        )
        after = pipeline.predict_scalar(kind, loaded.model, loaded.input_stats, loaded.scalar_stats, rows)
    assert np.array_equal(before, after)


def test_checkpoint_save_is_byte_deterministic(tmp_path, small_dataset):
    config = TrainConfig(model_kind="dnn", epochs=1, seed=4)
    result = pipeline.train(small_dataset, config)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, result, small_dataset)
    save_checkpoint(p2, result, small_dataset)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_rejects_non_checkpoint(tmp_path):
    path = tmp_path / "other.bin"
    save_container(path, {"kind": "something-else"}, {"a": np.zeros(2)})
    with pytest.raises(ValueError, match="not a model checkpoint"):
        load_checkpoint(path)
