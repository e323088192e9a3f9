"""Checkpoint and loss-curve persistence."""

import json
import os
import shutil
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import torch

from ..config.settings import NetVariant
from ..io.tensorfile import atomic_write_text, read_tensor, write_tensor
from ..logging.setup import get_logger
from .model import RegistrationModel, build

MANIFEST_NAME = "manifest.json"
CURVE_NAME = "loss_curve.jsonl"


class CheckpointError(RuntimeError):
    """Missing or inconsistent checkpoint."""


@dataclass
class CheckpointInfo:
    """Checkpoint manifest contents."""

    variant: dict[str, Any]
    epoch: int
    loss: float | None
    dtype: str
    parameters: dict[str, list[int]] = field(default_factory=dict)
    created_at: float = field(default_factory=time.time)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class EpochRecord:
    """One line of the loss curve."""

    epoch: int
    loss: float
    val_dice: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _file_name(param_name: str) -> str:
    return f"{param_name}.blt"


class CheckpointManager:
    """Save and restore model checkpoints under one run directory.

    Each checkpoint is a directory of tensor files plus ``manifest.json``; it
    appears under its final name only once completely written.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.logger = get_logger(__name__)

    def checkpoint_dir(self, epoch: int) -> Path:
        return self.root / f"epoch_{epoch:04d}"

    def save(
        self,
        model: RegistrationModel,
        epoch: int,
        loss: float | None,
        path: Path | None = None,
    ) -> Path:
        """Write a checkpoint of ``model``; returns its directory."""
        target = Path(path) if path is not None else self.checkpoint_dir(epoch)
        target.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(dir=target.parent, prefix=f".{target.name}."))
        try:
            params = model.params()
            for name, tensor in params.items():
                write_tensor(staging / _file_name(name), tensor.detach())
            info = CheckpointInfo(
                variant=model.variant.model_dump(mode="json"),
                epoch=epoch,
                loss=loss,
                dtype=str(next(model.parameters()).dtype).removeprefix("torch."),
                parameters={name: list(t.shape) for name, t in params.items()},
            )
            manifest = json.dumps(info.to_dict(), indent=2)
            atomic_write_text(staging / MANIFEST_NAME, manifest)
            self._replace(staging, target)
        except BaseException:
            shutil.rmtree(staging, ignore_errors=True)
            raise
        self.logger.info(f"Saved checkpoint {target} (epoch {epoch})")
        return target

    @staticmethod
    def _replace(staging: Path, target: Path) -> None:
        if not target.exists():
            os.replace(staging, target)
            return
        retired = target.with_name(f".{target.name}.old-{os.getpid()}")
        os.replace(target, retired)
        os.replace(staging, target)
        shutil.rmtree(retired, ignore_errors=True)

    def read_info(self, path: str | Path) -> CheckpointInfo:
        manifest = Path(path) / MANIFEST_NAME
        if not manifest.exists():
            raise CheckpointError(f"no checkpoint manifest at {manifest}")
        try:
            return CheckpointInfo(**json.loads(manifest.read_text()))
        except (json.JSONDecodeError, TypeError) as e:
            raise CheckpointError(f"invalid checkpoint manifest {manifest}: {e}") from e

    def load(
        self, path: str | Path | None = None
    ) -> tuple[RegistrationModel, CheckpointInfo]:
        """Rebuild the model stored at ``path`` (default: the latest checkpoint)."""
        path = Path(path) if path is not None else self.latest()
        if path is None:
            raise CheckpointError(f"no checkpoints under {self.root}")
        info = self.read_info(path)
        variant = NetVariant(**info.variant)
        model = build(variant, dtype=getattr(torch, info.dtype), seed=None)
        params = model.params()
        if set(params) != set(info.parameters):
            raise CheckpointError(
                f"checkpoint {path} parameters do not match variant {variant.label}"
            )
        with torch.no_grad():
            for name, param in params.items():
                tensor = read_tensor(path / _file_name(name))
                if tensor.shape != param.shape:
                    raise CheckpointError(
                        f"{name}: stored shape {tuple(tensor.shape)}, "
                        f"expected {tuple(param.shape)}"
                    )
                param.copy_(tensor)
        return model, info

    def checkpoints(self) -> list[Path]:
        if not self.root.exists():
            return []
        return sorted(
            p
            for p in self.root.glob("epoch_*")
            if p.is_dir() and (p / MANIFEST_NAME).exists()
        )

    def latest(self) -> Path | None:
        checkpoints = self.checkpoints()
        return checkpoints[-1] if checkpoints else None

    @property
    def curve_path(self) -> Path:
        return self.root / CURVE_NAME

    def write_curve(self, records: list[EpochRecord]) -> None:
        """Rewrite the loss curve as JSON lines."""
        lines = "".join(json.dumps(r.to_dict()) + "\n" for r in records)
        atomic_write_text(self.curve_path, lines)

    def read_curve(self) -> list[EpochRecord]:
        if not self.curve_path.exists():
            return []
        return [
            EpochRecord(**json.loads(line))
            for line in self.curve_path.read_text().splitlines()
            if line.strip()
        ]
