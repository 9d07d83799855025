"""Tests for sampling, dataset assembly, normalization, training, and metrics."""

import numpy as np
import pytest

from amrom import pipeline, thermal
from amrom.pipeline import (
    Dataset,
    EmptyDatasetError,
    NormStats,
    SchemaVersionError,
    TrainConfig,
    TrainingDivergedError,
    abs_rel_err,
    denormalize,
    generate_dataset,
    grid_to_series,
    load_dataset,
    normalize_apply,
    normalize_fit,
    r2,
    rmse,
    sample_parameters,
    save_dataset,
    series_to_grid,
    split_indices,
    train,
)


def small_config(**overrides):
    """Cheap thermal configuration for dataset-level tests."""
    base = dict(
        rho=7.8e-6, c=9.0e5, k=0.03, h=1e-5, T_ambient=300.0, T_melt=1500.0,
        nx=20, ny=14, dx=0.05, dt=0.13, n_steps=24, depth=0.3, scan_offset=0.35,
    )
    base.update(overrides)
    return thermal.config_from_dict(base)


@pytest.fixture(scope="module")
def tiny_dataset():
    props, grid = small_config()
    return generate_dataset(n=40, seed=11, props=props, grid=grid)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def test_samples_respect_bounds():
    samples = sample_parameters(500, seed=0)
    assert len(samples) == 500
    arr = np.array([s.as_array() for s in samples])
    for j, name in enumerate(pipeline.PARAM_NAMES):
        lo, hi = thermal.PARAMETER_BOUNDS[name]
        assert arr[:, j].min() >= lo and arr[:, j].max() <= hi


def test_sampling_deterministic_under_seed():
    a = sample_parameters(20, seed=5)
    b = sample_parameters(20, seed=5)
    assert all(x == y for x, y in zip(a, b))


def test_different_seeds_differ():
    a = np.array([s.as_array() for s in sample_parameters(20, seed=1)])
    b = np.array([s.as_array() for s in sample_parameters(20, seed=2)])
    assert np.any(a != b)


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------


def test_split_sizes_at_full_scale():
    train_idx, val_idx, test_idx = split_indices(470, seed=0)
    assert (len(train_idx), len(val_idx), len(test_idx)) == (376, 47, 47)


def test_split_covers_all_indices_disjointly():
    train_idx, val_idx, test_idx = split_indices(53, seed=3)
    merged = np.concatenate([train_idx, val_idx, test_idx])
    assert sorted(merged.tolist()) == list(range(53))


def test_split_deterministic():
    a = split_indices(100, seed=9)
    b = split_indices(100, seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_split_rejects_tiny_sets():
    with pytest.raises(ValueError):
        split_indices(9, seed=0)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def test_normalize_hand_example():
    stats = normalize_fit(np.array([[0.0], [2.0]]))
    assert stats.mean[0] == 1.0 and stats.std[0] == 1.0
    np.testing.assert_array_equal(normalize_apply(stats, np.array([[0.0], [2.0]])), [[-1.0], [1.0]])


def test_normalize_round_trip():
    rng = np.random.default_rng(0)
    rows = rng.standard_normal((20, 4)) * 7 + 3
    stats = normalize_fit(rows)
    np.testing.assert_allclose(denormalize(stats, normalize_apply(stats, rows)), rows, atol=1e-12)


def test_normalize_constant_column_falls_back_to_unit_std():
    rows = np.column_stack([np.full(5, 2.0), np.arange(5.0)])
    stats = normalize_fit(rows)
    assert stats.std[0] == 1.0
    normalized = normalize_apply(stats, rows)
    assert np.all(normalized[:, 0] == 0.0)
    assert np.all(np.isfinite(normalized))


def test_normalize_channel_axis_for_series():
    rng = np.random.default_rng(1)
    series = rng.standard_normal((6, 2, 15))
    stats = normalize_fit(series, channel_axis=1)
    normalized = normalize_apply(stats, series, channel_axis=1)
    assert abs(normalized[:, 0, :].mean()) < 1e-12
    np.testing.assert_allclose(
        denormalize(stats, normalized, channel_axis=1), series, atol=1e-12
    )


def test_normalize_rejects_empty():
    with pytest.raises(ValueError):
        normalize_fit(np.zeros((0, 3)))


# ---------------------------------------------------------------------------
# series resampling
# ---------------------------------------------------------------------------


def test_series_grid_round_trip_is_tight_for_smooth_series():
    steps = np.linspace(0.0, 1.0, 200)
    series = np.stack([np.sin(2 * np.pi * steps), steps**2])[None]
    back = grid_to_series(series_to_grid(series, 256), 200)
    assert np.max(np.abs(back - series)) < 2e-3


def test_series_grid_preserves_endpoints():
    series = np.random.default_rng(2).standard_normal((3, 2, 200))
    fields = series_to_grid(series, 256)
    np.testing.assert_allclose(fields[..., 0], series[..., 0], atol=1e-14)
    np.testing.assert_allclose(fields[..., -1], series[..., -1], atol=1e-14)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def test_perfect_predictions():
    true = np.array([[1.0, 10.0], [2.0, 20.0]])
    assert np.all(rmse(true, true) == 0.0)
    assert np.all(r2(true, true) == 1.0)
    rel, excluded = abs_rel_err(true, true)
    assert np.all(rel == 0.0) and excluded == 0


def test_mean_predictor_has_zero_r2():
    true = np.array([[1.0], [2.0], [3.0]])
    pred = np.full((3, 1), 2.0)
    np.testing.assert_allclose(r2(pred, true), [0.0], atol=1e-15)


def test_metrics_hand_example():
    pred = np.array([[1.0], [3.0]])
    true = np.array([[1.0], [2.0]])
    np.testing.assert_allclose(rmse(pred, true), [np.sqrt(0.5)])
    # SS_res = 1, SS_tot = (1-1.5)^2 + (2-1.5)^2 = 0.5
    np.testing.assert_allclose(r2(pred, true), [1.0 - 1.0 / 0.5])
    rel, excluded = abs_rel_err(pred, true)
    np.testing.assert_allclose(rel, [[0.0], [0.5]])
    assert excluded == 0


def test_abs_rel_err_flags_zero_truths():
    rel, excluded = abs_rel_err(np.array([[1.0], [1.0]]), np.array([[0.0], [2.0]]))
    assert excluded == 1
    assert np.isnan(rel[0, 0]) and rel[1, 0] == 0.5


def test_rmse_squared_equals_mse():
    rng = np.random.default_rng(3)
    pred, true = rng.standard_normal((30, 2)), rng.standard_normal((30, 2))
    mse_cols = np.mean((pred - true) ** 2, axis=0)
    np.testing.assert_allclose(rmse(pred, true) ** 2, mse_cols, atol=1e-12)


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------


def test_dataset_filtering_keeps_only_melted(tiny_dataset):
    props, grid = small_config()
    assert tiny_dataset.meta["n_requested"] == 40
    assert 10 <= tiny_dataset.n_samples <= 40
    # every retained sample re-simulates to a melt
    for row in tiny_dataset.inputs[:5]:
        rec = thermal.run(thermal.ProcessParameters.from_array(row), props, grid)
        assert rec.melted


def test_dataset_with_low_threshold_filters_nothing():
    props, grid = small_config(T_melt=300.0 + 1e-9)
    ds = generate_dataset(n=12, seed=3, props=props, grid=grid)
    assert ds.n_samples == 12


def test_dataset_generation_deterministic():
    props, grid = small_config(T_melt=300.0 + 1e-9)
    a = generate_dataset(n=15, seed=21, props=props, grid=grid)
    b = generate_dataset(n=15, seed=21, props=props, grid=grid)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.series_targets, b.series_targets)
    assert np.array_equal(a.train_idx, b.train_idx)
    assert a.meta == b.meta


def test_dataset_raises_when_nothing_melts():
    props, grid = small_config(T_melt=1e9)
    with pytest.raises(EmptyDatasetError):
        generate_dataset(n=5, seed=0, props=props, grid=grid)


def test_stats_depend_only_on_training_rows(tiny_dataset):
    ds = tiny_dataset
    perturbed_inputs = ds.inputs.copy()
    perturbed_inputs[ds.test_idx[0]] += 123.0
    stats = normalize_fit(perturbed_inputs[ds.train_idx])
    assert np.array_equal(stats.mean, ds.input_stats.mean)
    assert np.array_equal(stats.std, ds.input_stats.std)


def test_dataset_file_round_trip(tmp_path, tiny_dataset):
    path = tmp_path / "data.bin"
    save_dataset(path, tiny_dataset)
    loaded = load_dataset(path)
    assert np.array_equal(loaded.inputs, tiny_dataset.inputs)
    assert np.array_equal(loaded.scalar_targets, tiny_dataset.scalar_targets)
    assert np.array_equal(loaded.series_targets, tiny_dataset.series_targets)
    assert np.array_equal(loaded.test_idx, tiny_dataset.test_idx)
    assert loaded.meta == tiny_dataset.meta
    # identical regeneration writes identical bytes
    path2 = tmp_path / "data2.bin"
    save_dataset(path2, tiny_dataset)
    assert path.read_bytes() == path2.read_bytes()


def test_dataset_schema_version_gate(tmp_path, tiny_dataset):
    path = tmp_path / "data.bin"
    ds = Dataset(**{**tiny_dataset.__dict__, "meta": {**tiny_dataset.meta, "schema_version": 99}})
    save_dataset(path, ds)
    with pytest.raises(SchemaVersionError):
        load_dataset(path)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

FAST_FNO = dict(n_layers=2, n_modes=3, width=8, grid_n=32)


def test_zero_learning_rate_keeps_weights(tiny_dataset):
    config = TrainConfig(model_kind="fno", epochs=2, lr=0.0, seed=4, **FAST_FNO)
    result = train(tiny_dataset, config)
    reference = type(result.model).init(result.model.config, seed=np.random.SeedSequence(4).spawn(2)[0])
    for key in reference.params:
        assert np.array_equal(result.model.params[key], reference.params[key])
    assert len(result.train_mse) == 2
    assert result.train_mse[0] == result.train_mse[1]


def test_training_reduces_loss_for_both_kinds(tiny_dataset):
    for kind, extra in (("fno", FAST_FNO), ("dnn", {})):
        config = TrainConfig(model_kind=kind, epochs=25, seed=5, **extra)
        result = train(tiny_dataset, config)
        assert np.all(np.isfinite(result.train_mse))
        assert result.train_mse[-1] < result.train_mse[0]
        assert len(result.val_mse) == config.epochs


def test_training_is_deterministic(tiny_dataset):
    config = TrainConfig(model_kind="dnn", epochs=4, seed=6)
    a = train(tiny_dataset, config)
    b = train(tiny_dataset, config)
    for key in a.model.params:
        assert np.array_equal(a.model.params[key], b.model.params[key])
    assert np.array_equal(a.train_mse, b.train_mse)
    assert np.array_equal(a.val_mse, b.val_mse)


def test_training_divergence_is_reported_with_epoch(tiny_dataset):
    config = TrainConfig(model_kind="dnn", epochs=40, lr=1e40, seed=7)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingDivergedError, match="epoch"):
            train(tiny_dataset, config)


def test_series_training_and_report(tiny_dataset):
    config = TrainConfig(model_kind="fno-series", epochs=12, seed=8, **FAST_FNO)
    result, report = pipeline.train_series(tiny_dataset, config)
    n_test = len(tiny_dataset.test_idx)
    assert report.per_sample_rmse.shape == (n_test, 2)
    assert report.predictions.shape == (n_test, 2, tiny_dataset.n_steps)
    assert report.rel_l2.shape == (n_test, 2)
    assert np.all(np.isfinite(report.per_sample_rmse))
    assert report.median_rel_l2.shape == (2,)


def test_benchmark_shares_test_split(tiny_dataset):
    res = pipeline.benchmark(
        tiny_dataset,
        TrainConfig(model_kind="fno", epochs=3, seed=9, **FAST_FNO),
        TrainConfig(model_kind="dnn", epochs=3, seed=9),
    )
    assert np.array_equal(res.fno_report.test_idx, res.dnn_report.test_idx)
    assert res.fno_report.rmse.shape == (2,) and res.dnn_report.rmse.shape == (2,)
    assert res.fno_report.r2.shape == (2,) and res.dnn_report.r2.shape == (2,)
    assert np.all(res.fno_report.r2 <= 1.0) and np.all(res.dnn_report.r2 <= 1.0)


def test_train_config_defaults():
    assert TrainConfig(model_kind="fno").resolved_lr == 0.001
    assert TrainConfig(model_kind="dnn").resolved_lr == 0.007
    assert TrainConfig(model_kind="fno").resolved_modes == 5
    assert TrainConfig(model_kind="fno-series").resolved_modes == 50
    assert TrainConfig(model_kind="fno").epochs == 512
    with pytest.raises(ValueError):
        TrainConfig(model_kind="cnn")
