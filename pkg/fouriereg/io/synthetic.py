"""Synthetic disc/ring registration datasets."""

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from ..core.data import RegistrationPair
from ..core.deform import exp_svf, identity_grid, warp
from ..core.fourier import random_band_limited
from ..core.metrics import LabelMask, initial_dice, warp_labels
from ..logging.setup import get_logger
from .dataset import DatasetManifest, PairRecord
from .tensorfile import atomic_write_text, write_tensor

logger = get_logger(__name__)

VELOCITY_REDUCTION = 8
EDGE_SOFTNESS = 1.5


@dataclass
class SyntheticSummary:
    """What ``gen_synthetic`` wrote."""

    root: str
    seed: int
    shape: list[int]
    deform_scale: float
    n_labels: int
    pairs: dict[str, int]
    initial_dice: dict[str, float]

    def to_dict(self) -> dict:
        return asdict(self)


def _uniform(generator: torch.Generator, low: float, high: float) -> float:
    sample = torch.rand((), generator=generator, dtype=torch.float64)
    return low + (high - low) * float(sample)


def make_template(
    shape: Sequence[int], n_labels: int, generator: torch.Generator
) -> tuple[torch.Tensor, torch.Tensor]:
    """A soft-edged image of nested discs and a ring, plus its label mask.

    Labels: 1 outer disc, 2 ring, 3 core, 4 satellite disc; only the first
    ``n_labels`` are drawn into the mask.
    """
    shape = tuple(shape)
    grid = identity_grid(shape)
    extent = min(shape)
    center = [n / 2 + _uniform(generator, -extent / 16, extent / 16) for n in shape]

    def distance(c: Sequence[float]) -> torch.Tensor:
        offsets = torch.stack([grid[k] - c[k] for k in range(len(shape))])
        return offsets.pow(2).sum(0).sqrt()

    def soft(radius: float, dist: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid((radius - dist) / EDGE_SOFTNESS)

    dist = distance(center)
    outer = extent * _uniform(generator, 0.28, 0.34)
    ring_out = extent * _uniform(generator, 0.19, 0.23)
    ring_in = ring_out - extent * _uniform(generator, 0.05, 0.07)
    core = extent * _uniform(generator, 0.06, 0.09)

    direction = torch.randn(len(shape), generator=generator, dtype=torch.float64)
    direction = direction / direction.norm()
    sat_center = [c + 0.8 * outer * float(d) for c, d in zip(center, direction)]
    sat_radius = extent * _uniform(generator, 0.05, 0.07)
    sat_dist = distance(sat_center)

    image = (
        0.3 * soft(outer, dist)
        + 0.4 * (soft(ring_out, dist) - soft(ring_in, dist))
        + 0.6 * soft(core, dist)
        + 0.5 * soft(sat_radius, sat_dist)
    ).clamp(0.0, 1.0)

    mask = torch.zeros(shape, dtype=torch.int32)
    mask[dist < outer] = 1
    if n_labels >= 2:
        mask[(dist < ring_out) & (dist >= ring_in)] = 2
    if n_labels >= 3:
        mask[dist < core] = 3
    if n_labels >= 4:
        mask[sat_dist < sat_radius] = 4
    return image, mask


def random_velocity(
    shape: Sequence[int], deform_scale: float, generator: torch.Generator
) -> torch.Tensor:
    """A ``(1, D, *shape)`` band-limited SVF with ``max |v| == deform_scale``."""
    dims = len(shape)
    reduction = (VELOCITY_REDUCTION,) * dims
    v = random_band_limited((1, dims) + tuple(shape), reduction, generator)
    peak = float(v.abs().max())
    if deform_scale == 0.0 or peak == 0.0:
        return torch.zeros_like(v)
    return v * (deform_scale / peak)


def make_pair(
    pair_id: str,
    shape: Sequence[int],
    deform_scale: float,
    n_labels: int,
    generator: torch.Generator,
    exp_steps: int = 7,
) -> RegistrationPair:
    """Template as the moving image; its deformation by ``Exp(v)`` as the fixed one."""
    image, mask = make_template(shape, n_labels, generator)
    u = exp_svf(random_velocity(shape, deform_scale, generator), exp_steps)
    fixed = warp(image[None, None], u)[0]
    fixed_mask = warp_labels(LabelMask(mask), u[0]).labels
    return RegistrationPair(pair_id, image[None], fixed, mask, fixed_mask)


def gen_synthetic(
    out_dir: str | Path,
    seed: int = 7,
    n_train: int = 200,
    n_test: int = 20,
    shape: Sequence[int] = (96, 96),
    deform_scale: float = 3.0,
    n_labels: int = 4,
) -> SyntheticSummary:
    """Write ``train/`` and ``test/`` splits and the initial-Dice fixture."""
    shape = tuple(int(n) for n in shape)
    if len(shape) not in (2, 3) or any(n <= 0 or n % VELOCITY_REDUCTION for n in shape):
        raise ValueError(f"shape axes must be positive multiples of 8, got {shape}")
    if not 1 <= n_labels <= 4:
        raise ValueError(f"n_labels must be 1..4, got {n_labels}")

    root = Path(out_dir)
    generator = torch.Generator().manual_seed(seed)
    counts = {"train": n_train, "test": n_test}
    dice_means: dict[str, float] = {}

    for split, count in counts.items():
        split_dir = root / split
        records, scores = [], []
        for i in range(count):
            pair = make_pair(
                f"{split}-{i:04d}", shape, deform_scale, n_labels, generator
            )
            names = {
                "moving": f"{pair.pair_id}_moving.blt",
                "fixed": f"{pair.pair_id}_fixed.blt",
                "moving_mask": f"{pair.pair_id}_moving_mask.blt",
                "fixed_mask": f"{pair.pair_id}_fixed_mask.blt",
            }
            write_tensor(split_dir / names["moving"], pair.moving[0].float())
            write_tensor(split_dir / names["fixed"], pair.fixed[0].float())
            assert pair.moving_mask is not None and pair.fixed_mask is not None
            write_tensor(split_dir / names["moving_mask"], pair.moving_mask)
            write_tensor(split_dir / names["fixed_mask"], pair.fixed_mask)
            records.append(PairRecord(pair_id=pair.pair_id, **names))
            scores.append(initial_dice(pair))
        DatasetManifest(pairing="listed", shape=shape, pairs=records).save(
            split_dir / "manifest.json"
        )
        dice_means[split] = float(np.mean(scores)) if scores else math.nan
        logger.info(
            f"Generated {count} {split} pairs in {split_dir} "
            f"(initial dice {dice_means[split]:.4f})"
        )

    summary = SyntheticSummary(
        root=str(root),
        seed=seed,
        shape=list(shape),
        deform_scale=deform_scale,
        n_labels=n_labels,
        pairs=counts,
        initial_dice=dice_means,
    )
    atomic_write_text(root / "fixture.json", json.dumps(summary.to_dict(), indent=2))
    return summary
