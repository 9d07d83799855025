"""Shared fixtures: a cheap thermal configuration and a small on-disk dataset."""

import json

import pytest

from amrom import pipeline, thermal

CHEAP_CONFIG = {
    "rho": 7.8e-6,
    "c": 9.0e5,
    "k": 0.03,
    "h": 1e-5,
    "T_ambient": 300.0,
    "T_melt": 1000.0,
    "nx": 20,
    "ny": 14,
    "dx": 0.05,
    "dt": 0.13,
    "n_steps": 24,
    "depth": 0.3,
    "scan_offset": 0.35,
}


@pytest.fixture(scope="session")
def cheap_config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("config") / "thermal.json"
    path.write_text(json.dumps(CHEAP_CONFIG))
    return path


@pytest.fixture(scope="session")
def small_dataset():
    props, grid = thermal.config_from_dict(CHEAP_CONFIG)
    return pipeline.generate_dataset(n=40, seed=11, props=props, grid=grid)


@pytest.fixture(scope="session")
def small_dataset_file(tmp_path_factory, small_dataset):
    path = tmp_path_factory.mktemp("data") / "dataset.bin"
    pipeline.save_dataset(path, small_dataset)
    return path
