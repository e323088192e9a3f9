"""Common test fixtures and utilities for fouriereg tests."""

import logging

import pytest
import torch
import yaml

from fouriereg.config.settings import NetVariant, Settings
from fouriereg.io.synthetic import gen_synthetic

from .utils import gaussian_blob


@pytest.fixture
def generator():
    """Seeded torch generator."""
    return torch.Generator().manual_seed(1234)


@pytest.fixture
def tiny_variant():
    """Small 2D Fourier-Net for fast forward/backward passes."""
    return NetVariant(kind="fourier-net", field_reduction=4, base_channels=2)


@pytest.fixture
def tiny_settings():
    """Settings for seconds-scale training runs."""
    return Settings(
        model={"kind": "fourier-net", "field_reduction": 4, "base_channels": 2},
        training={
            "loss": "mse",
            "lambda": 0.01,
            "epochs": 2,
            "batch": 2,
            "lr": 1e-3,
            "seed": 3,
            "dtype": "float64",
        },
        data={"shape": [32, 32], "n_train": 4, "n_test": 2, "deform_scale": 2.0},
        logging={"level": "INFO", "output": "stderr", "format": "text"},
    )


@pytest.fixture
def image_pair():
    """Two smooth 32x32 float64 images shaped (1, 1, H, W)."""
    moving = gaussian_blob((32, 32), center=(15.0, 16.0), sigma=6.0)
    fixed = gaussian_blob((32, 32), center=(17.0, 14.5), sigma=6.5)
    return moving[None, None], fixed[None, None]


@pytest.fixture
def synthetic_dir(tmp_path):
    """A small generated dataset (4 train, 2 test pairs, 32x32)."""
    root = tmp_path / "data"
    gen_synthetic(root, seed=7, n_train=4, n_test=2, shape=(32, 32), deform_scale=2.0)
    return root


@pytest.fixture
def temp_config_file(tmp_path):
    """A YAML configuration file for a tiny model."""
    config_data = {
        "model": {"kind": "fourier-net", "field_reduction": 4, "base_channels": 2},
        "training": {"epochs": 1, "batch": 2, "seed": 5, "lambda": 0.01},
        "data": {"shape": [32, 32], "n_train": 2, "n_test": 2},
        "logging": {"level": "WARNING", "output": "stderr", "format": "text"},
    }
    path = tmp_path / "fouriereg.yaml"
    path.write_text(yaml.dump(config_data))
    return path


@pytest.fixture(autouse=True)
def reset_logging():
    """Drop handlers installed by CLI runs; their streams close with the runner."""
    yield
    logger = logging.getLogger("fouriereg")
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)
    logger.setLevel(logging.NOTSET)
