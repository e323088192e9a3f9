"""Dataset manifests and pair loading."""

import itertools
import json
from pathlib import Path
from typing import Literal

import torch
from pydantic import BaseModel, Field, ValidationError, model_validator

from ..core.data import RegistrationPair
from ..logging.setup import get_logger
from .pgm import read_pgm
from .tensorfile import atomic_write_text, read_tensor

logger = get_logger(__name__)

PairingMode = Literal["listed", "all-pairs", "atlas-to-subject"]


class ManifestError(ValueError):
    """Invalid manifest or missing/inconsistent referenced files."""


class ImageRecord(BaseModel):
    """One image with its optional label mask."""

    id: str
    image: str
    mask: str | None = None


class PairRecord(BaseModel):
    """One registration pair; paths are relative to the manifest directory."""

    pair_id: str
    moving: str
    fixed: str
    moving_mask: str | None = None
    fixed_mask: str | None = None


class DatasetManifest(BaseModel):
    """Pairs listed explicitly, or images paired all-to-all or atlas-to-subject."""

    pairing: PairingMode = "listed"
    shape: tuple[int, ...] | None = None
    pairs: list[PairRecord] = Field(default_factory=list)
    images: list[ImageRecord] = Field(default_factory=list)
    atlas: ImageRecord | None = None

    @model_validator(mode="after")
    def _complete(self) -> "DatasetManifest":
        if self.pairing == "listed" and not self.pairs:
            raise ValueError("listed pairing needs a non-empty 'pairs' list")
        if self.pairing == "all-pairs" and len(self.images) < 2:
            raise ValueError("all-pairs pairing needs at least two images")
        if self.pairing == "atlas-to-subject" and (
            self.atlas is None or not self.images
        ):
            raise ValueError(
                "atlas-to-subject pairing needs an atlas and subject images"
            )
        return self

    def resolve(self) -> list[PairRecord]:
        """The concrete moving/fixed pairs for this manifest's pairing mode."""
        if self.pairing == "listed":
            return list(self.pairs)
        if self.pairing == "all-pairs":
            return [
                PairRecord(
                    pair_id=f"{m.id}->{f.id}",
                    moving=m.image,
                    fixed=f.image,
                    moving_mask=m.mask,
                    fixed_mask=f.mask,
                )
                for m, f in itertools.permutations(self.images, 2)
            ]
        assert self.atlas is not None
        atlas = self.atlas
        return [
            PairRecord(
                pair_id=f"{atlas.id}->{subject.id}",
                moving=atlas.image,
                fixed=subject.image,
                moving_mask=atlas.mask,
                fixed_mask=subject.mask,
            )
            for subject in self.images
        ]

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise ManifestError(f"manifest not found: {path}")
        try:
            return cls(**json.loads(path.read_text()))
        except (json.JSONDecodeError, ValidationError) as e:
            raise ManifestError(f"invalid manifest {path}: {e}") from e

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, self.model_dump_json(indent=2, exclude_none=True))


def load_image(path: str | Path) -> torch.Tensor:
    """Read a ``.pgm`` image or a tensor file."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    return read_tensor(path)


def load_pairs(manifest_path: str | Path) -> list[RegistrationPair]:
    """Load every pair of a manifest, checking files exist and shapes agree."""
    manifest_path = Path(manifest_path)
    manifest = DatasetManifest.load(manifest_path)
    root = manifest_path.parent
    records = manifest.resolve()

    missing = sorted(
        {
            name
            for record in records
            for name in (
                record.moving,
                record.fixed,
                record.moving_mask,
                record.fixed_mask,
            )
            if name is not None and not (root / name).exists()
        }
    )
    if missing:
        raise ManifestError(
            f"manifest {manifest_path} references missing files: {missing}"
        )

    cache: dict[str, torch.Tensor] = {}

    def get(name: str | None) -> torch.Tensor | None:
        if name is None:
            return None
        if name not in cache:
            cache[name] = load_image(root / name)
        return cache[name]

    pairs = []
    shape = manifest.shape
    for record in records:
        moving, fixed = get(record.moving), get(record.fixed)
        assert moving is not None and fixed is not None
        masks = [get(record.moving_mask), get(record.fixed_mask)]
        for tensor in [moving, fixed] + [m for m in masks if m is not None]:
            if shape is None:
                shape = tuple(tensor.shape)
            if tuple(tensor.shape) != tuple(shape):
                raise ManifestError(
                    f"pair {record.pair_id}: shape {tuple(tensor.shape)} "
                    f"differs from {tuple(shape)}"
                )
        pairs.append(
            RegistrationPair(
                pair_id=record.pair_id,
                moving=moving[None],
                fixed=fixed[None],
                moving_mask=masks[0],
                fixed_mask=masks[1],
            )
        )
    logger.info(f"Loaded {len(pairs)} pairs from {manifest_path}")
    return pairs
