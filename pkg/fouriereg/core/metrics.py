"""Registration quality metrics: Dice, Hausdorff distance, folding, runtime."""

import asyncio
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np
import torch
from scipy.ndimage import binary_erosion, generate_binary_structure
from scipy.spatial.distance import directed_hausdorff

from ..logging.setup import get_logger
from .data import RegistrationPair
from .deform import identity_grid, neg_jac_fraction
from .tensor import row_major_strides

logger = get_logger(__name__)


class MetricError(ValueError):
    """A metric is undefined for the given masks."""


@dataclass(frozen=True)
class LabelMask:
    """Integer labels over the spatial grid; 0 is background."""

    labels: torch.Tensor

    def __post_init__(self) -> None:
        if self.labels.is_floating_point() or self.labels.is_complex():
            raise MetricError(
                f"label masks must be integer tensors, got {self.labels.dtype}"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.labels.shape)

    @property
    def label_set(self) -> tuple[int, ...]:
        values = torch.unique(self.labels).tolist()
        return tuple(int(v) for v in values if v != 0)

    def binary(self, label: int) -> np.ndarray:
        return (self.labels == label).cpu().numpy()


@dataclass(frozen=True)
class DiceResult:
    per_label: dict[int, float]
    mean: float


def dice(a: LabelMask, b: LabelMask) -> DiceResult:
    """Per-label Dice overlap; labels absent from both masks are skipped.

    The mean is NaN when neither mask has a foreground label.
    """
    if a.shape != b.shape:
        raise MetricError(f"masks differ in shape: {a.shape} vs {b.shape}")
    per_label: dict[int, float] = {}
    for label in sorted(set(a.label_set) | set(b.label_set)):
        in_a = a.labels == label
        in_b = b.labels == label
        overlap = int((in_a & in_b).sum())
        per_label[label] = 2.0 * overlap / (int(in_a.sum()) + int(in_b.sum()))
    mean = float(np.mean(list(per_label.values()))) if per_label else math.nan
    return DiceResult(per_label, mean)


def warp_labels(mask: LabelMask, u: torch.Tensor) -> LabelMask:
    """Nearest-neighbour sample of ``mask`` at ``x + u(x)``, clamped to the grid.

    ``u`` is ``(D, *spatial)`` or ``(1, D, *spatial)``.
    """
    if u.dim() == mask.labels.dim() + 2:
        u = u[0]
    spatial = mask.shape
    if tuple(u.shape) != (len(spatial),) + spatial:
        raise MetricError(f"field {tuple(u.shape)} does not match mask {spatial}")
    grid = identity_grid(spatial, dtype=torch.float64, device=u.device)
    coords = grid + u.detach().double()
    index = torch.zeros(spatial, dtype=torch.long, device=u.device)
    for axis, (n, stride) in enumerate(zip(spatial, row_major_strides(spatial))):
        nearest = torch.floor(coords[axis] + 0.5).clamp(0, n - 1).long()
        index = index + nearest * stride
    return LabelMask(mask.labels.reshape(-1)[index.reshape(-1)].reshape(spatial))


def _boundary(region: np.ndarray) -> np.ndarray:
    structure = generate_binary_structure(region.ndim, 1)
    return region & ~binary_erosion(region, structure=structure, border_value=0)


def hausdorff(a: LabelMask, b: LabelMask, label: int) -> float:
    """Classic (maximum) Hausdorff distance between the label boundaries, in voxels."""
    if a.shape != b.shape:
        raise MetricError(f"masks differ in shape: {a.shape} vs {b.shape}")
    region_a, region_b = a.binary(label), b.binary(label)
    if not region_a.any() or not region_b.any():
        raise MetricError(f"label {label} missing from one of the masks")
    points_a = np.argwhere(_boundary(region_a)).astype(np.float64)
    points_b = np.argwhere(_boundary(region_b)).astype(np.float64)
    forward = directed_hausdorff(points_a, points_b)[0]
    reverse = directed_hausdorff(points_b, points_a)[0]
    return float(max(forward, reverse))


def mean_hausdorff(a: LabelMask, b: LabelMask) -> float | None:
    """Mean Hausdorff distance over labels present in both masks."""
    shared = sorted(set(a.label_set) & set(b.label_set))
    if not shared:
        return None
    return float(np.mean([hausdorff(a, b, label) for label in shared]))


@dataclass
class PairMetrics:
    """One metrics record, as emitted on a JSON line."""

    pair_id: str
    dice_mean: float
    dice_per_label: dict[str, float] = field(default_factory=dict)
    hd: float | None = None
    neg_jac_pct: float = 0.0
    seconds: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _masks(pair: RegistrationPair) -> tuple[LabelMask, LabelMask]:
    if not pair.has_masks:
        raise MetricError(f"pair {pair.pair_id} has no label masks")
    assert pair.moving_mask is not None and pair.fixed_mask is not None
    return LabelMask(pair.moving_mask), LabelMask(pair.fixed_mask)


def initial_dice(pair: RegistrationPair) -> float:
    """Mean Dice of the unregistered masks."""
    moving, fixed = _masks(pair)
    return dice(moving, fixed).mean


def evaluate_pair(model: torch.nn.Module, pair: RegistrationPair) -> PairMetrics:
    """Register one pair and measure Dice, HD, folding and wall time."""
    moving_mask, fixed_mask = _masks(pair)
    dtype = next(model.parameters()).dtype
    start = time.perf_counter()
    with torch.no_grad():
        output = model(pair.moving[None].to(dtype), pair.fixed[None].to(dtype))
    seconds = time.perf_counter() - start

    warped_mask = warp_labels(moving_mask, output.displacement[0])
    overlap = dice(warped_mask, fixed_mask)
    return PairMetrics(
        pair_id=pair.pair_id,
        dice_mean=overlap.mean,
        dice_per_label={str(k): v for k, v in overlap.per_label.items()},
        hd=mean_hausdorff(warped_mask, fixed_mask),
        neg_jac_pct=neg_jac_fraction(output.displacement),
        seconds=seconds,
    )


async def evaluate_manifest(
    model: torch.nn.Module,
    pairs: Sequence[RegistrationPair],
    max_concurrency: int = 4,
) -> list[PairMetrics]:
    """Evaluate ``pairs`` concurrently in worker threads."""
    semaphore = asyncio.Semaphore(max(1, max_concurrency))

    async def run(pair: RegistrationPair) -> PairMetrics:
        async with semaphore:
            result = await asyncio.to_thread(evaluate_pair, model, pair)
        logger.debug(f"Evaluated {pair.pair_id}: dice {result.dice_mean:.4f}")
        return result

    return list(await asyncio.gather(*(run(pair) for pair in pairs)))


def summarize(results: Sequence[PairMetrics]) -> dict[str, float]:
    """Means over a set of metric records."""
    if not results:
        return {"pairs": 0}
    hds = [r.hd for r in results if r.hd is not None]
    return {
        "pairs": len(results),
        "dice_mean": float(np.mean([r.dice_mean for r in results])),
        "hd": float(np.mean(hds)) if hds else math.nan,
        "neg_jac_pct": float(np.mean([r.neg_jac_pct for r in results])),
        "seconds": float(np.mean([r.seconds for r in results])),
    }
