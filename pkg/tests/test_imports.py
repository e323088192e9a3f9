"""Every module imports cleanly in a fresh interpreter."""

import subprocess
import sys
from pathlib import Path

import pytest
import torch

ROOT = Path(__file__).resolve().parent.parent

MODULES = [
    "fouriereg",
    "fouriereg.cli.commands",
    "fouriereg.config.settings",
    "fouriereg.config.validators",
    "fouriereg.core.autodiff",
    "fouriereg.core.data",
    "fouriereg.core.deform",
    "fouriereg.core.fourier",
    "fouriereg.core.losses",
    "fouriereg.core.metrics",
    "fouriereg.core.model",
    "fouriereg.core.state",
    "fouriereg.core.tensor",
    "fouriereg.core.trainer",
    "fouriereg.io.dataset",
    "fouriereg.io.pgm",
    "fouriereg.io.synthetic",
    "fouriereg.io.tensorfile",
    "fouriereg.logging.setup",
]


@pytest.mark.parametrize("module", MODULES)
def test_module_imports(module):
    result = subprocess.run(
        [sys.executable, "-c", f"import {module}"],
        capture_output=True,
        text=True,
        cwd=ROOT,
    )
    assert result.returncode == 0, result.stderr


def test_members_do_not_shadow_annotation_names():
    """Class members named like ``torch`` or ``list`` break later annotations."""
    from fouriereg.core.state import CheckpointManager
    from fouriereg.core.tensor import DType

    assert not hasattr(DType, "torch")
    assert not hasattr(CheckpointManager, "list")
    assert DType.REAL64.torch_dtype is torch.float64
