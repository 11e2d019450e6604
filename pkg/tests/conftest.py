"""
Test configuration and fixtures for hypmoce tests.
"""

import json
import os
import sys

import pytest
from click.testing import CliRunner

# Add the src directory to the path so we can import modules
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from hypmoce.config import FrechetConfig, ModalitySpec, ModelConfig, SyntheticSpec, TrainConfig  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running directional experiment (set HYPMOCE_RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if os.getenv('HYPMOCE_RUN_SLOW') == '1':
        return
    skip = pytest.mark.skip(reason="set HYPMOCE_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


TINY_SPEC = SyntheticSpec(
    modalities=(
        ModalitySpec(name="deep", depth=3, dim=4),
        ModalitySpec(name="shallow", depth=2, dim=4),
    ),
    classes=2,
    subjects=6,
    samples_per_subject=8,
    noise=0.05,
    shift=0.1,
    seed=3,
)

TINY_MODEL = ModelConfig(
    dim=4,
    hidden=4,
    layers=1,
    heads=1,
    frechet=FrechetConfig(max_iters=500, tol=1e-11),
)


@pytest.fixture
def tiny_spec():
    """Two-modality, two-class synthetic spec small enough for exhaustive checks."""
    return TINY_SPEC


@pytest.fixture
def tiny_model_config():
    return TINY_MODEL


@pytest.fixture
def tiny_train_config():
    return TrainConfig(epochs=2, lr=1e-2, patience=5, batch_size=8, seed=0)


@pytest.fixture
def tiny_run_document():
    """JSON run configuration for CLI and pipeline tests."""
    return {
        "seed": 1,
        "data": {
            "synthetic": {
                "modalities": [
                    {"name": "deep", "depth": 3, "dim": 4},
                    {"name": "shallow", "depth": 2, "dim": 4},
                ],
                "classes": 2,
                "subjects": 6,
                "samples_per_subject": 8,
                "noise": 0.05,
                "shift": 0.1,
                "seed": 3,
            }
        },
        "model": {"dim": 4, "hidden": 4, "layers": 1, "heads": 1},
        "train": {"epochs": 2, "lr": 0.01, "patience": 5, "batch_size": 8},
        "eval": {"folds": 2, "val_groups": 1},
    }


@pytest.fixture
def write_json(tmp_path):
    """Write a JSON document under ``tmp_path`` and return its path."""
    def _write(name, document):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding='utf-8')
        return str(path)
    return _write


@pytest.fixture
def runner():
    """CliRunner that keeps stdout and stderr apart."""
    try:
        return CliRunner(mix_stderr=False)
    except TypeError:
        return CliRunner()
