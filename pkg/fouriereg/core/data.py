"""In-memory registration pairs."""

from dataclasses import dataclass
from typing import Sequence

import torch

from .tensor import ShapeError


@dataclass(frozen=True)
class RegistrationPair:
    """A moving/fixed image pair with optional label masks.

    Images are ``(1, *spatial)`` real tensors, masks ``(*spatial)`` integers.
    """

    pair_id: str
    moving: torch.Tensor
    fixed: torch.Tensor
    moving_mask: torch.Tensor | None = None
    fixed_mask: torch.Tensor | None = None

    def __post_init__(self) -> None:
        if self.moving.shape != self.fixed.shape:
            raise ShapeError(
                f"pair {self.pair_id}: moving {tuple(self.moving.shape)} and "
                f"fixed {tuple(self.fixed.shape)} differ"
            )
        for mask in (self.moving_mask, self.fixed_mask):
            if mask is not None and tuple(mask.shape) != self.spatial_shape:
                raise ShapeError(
                    f"pair {self.pair_id}: mask {tuple(mask.shape)} does not match "
                    f"image {self.spatial_shape}"
                )

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return tuple(self.moving.shape[1:])

    @property
    def has_masks(self) -> bool:
        return self.moving_mask is not None and self.fixed_mask is not None


def stack_images(
    pairs: Sequence[RegistrationPair], dtype: torch.dtype = torch.float32
) -> tuple[torch.Tensor, torch.Tensor]:
    """Batch the moving and fixed images of ``pairs`` as ``(B, 1, *spatial)``."""
    moving = torch.stack([pair.moving for pair in pairs]).to(dtype)
    fixed = torch.stack([pair.fixed for pair in pairs]).to(dtype)
    return moving, fixed
