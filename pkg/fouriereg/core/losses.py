"""Similarity and smoothness losses."""

import torch
import torch.nn.functional as F

from ..config.settings import TrainConfig
from .deform import exp_svf, warp


class LossError(ValueError):
    """Loss operands are incompatible."""


def _check_pair(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise LossError(
            f"loss operands differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}"
        )


def loss_mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean squared difference over all voxels."""
    _check_pair(a, b)
    return torch.mean((a - b) ** 2)


_CONV = {1: F.conv1d, 2: F.conv2d, 3: F.conv3d}


def loss_ncc(
    a: torch.Tensor, b: torch.Tensor, window: int = 9, eps: float = 1e-5
) -> torch.Tensor:
    """Negative mean local normalized cross-correlation.

    Each window covers a box of side ``window`` along every spatial axis of
    ``(B, C, *spatial)`` inputs, clipped to the image; means use the number
    of in-image voxels, so border windows stay invariant to intensity offsets.
    """
    _check_pair(a, b)
    dims = a.dim() - 2
    if dims not in _CONV:
        raise LossError(f"ncc expects (B, C, *spatial) inputs, got {tuple(a.shape)}")
    spatial = tuple(a.shape[2:])
    if any(window > n for n in spatial):
        raise LossError(f"ncc window {window} exceeds image shape {spatial}")

    a = a.reshape((-1, 1) + spatial)
    b = b.reshape((-1, 1) + spatial)
    box = torch.ones((1, 1) + (window,) * dims, dtype=a.dtype, device=a.device)
    conv = _CONV[dims]
    pad = window // 2

    def window_sum(x: torch.Tensor) -> torch.Tensor:
        return conv(x, box, padding=pad)

    count = window_sum(torch.ones_like(a[:1]))
    sum_a, sum_b = window_sum(a), window_sum(b)
    mean_a, mean_b = sum_a / count, sum_b / count
    cross = window_sum(a * b) - mean_a * sum_b
    var_a = window_sum(a * a) - mean_a * sum_a
    var_b = window_sum(b * b) - mean_b * sum_b
    cc = cross / torch.sqrt(var_a * var_b + eps)
    return -torch.mean(cc)


def loss_smooth(field: torch.Tensor) -> torch.Tensor:
    """Mean squared forward difference over axes, batch, channels and voxels.

    The last slice along each axis contributes a zero difference.
    """
    dims = field.dim() - 2
    total = field.new_zeros(())
    for axis in range(2, 2 + dims):
        total = total + torch.sum(torch.diff(field, dim=axis) ** 2)
    return total / (dims * field.numel())


def similarity(
    config: TrainConfig, warped: torch.Tensor, fixed: torch.Tensor
) -> torch.Tensor:
    if config.loss == "ncc":
        return loss_ncc(warped, fixed, config.ncc_window, config.ncc_eps)
    return loss_mse(warped, fixed)


def total_loss(
    config: TrainConfig,
    moving: torch.Tensor,
    fixed: torch.Tensor,
    field: torch.Tensor,
    diffeomorphic: bool = False,
    exp_steps: int = 7,
) -> torch.Tensor:
    """Similarity of the warped moving image plus ``lambda`` times smoothness.

    ``field`` is the displacement, or the velocity when ``diffeomorphic``; the
    smoothness term always acts on ``field``.
    """
    displacement = exp_svf(field, exp_steps) if diffeomorphic else field
    warped = warp(moving, displacement)
    return similarity(config, warped, fixed) + config.lambda_ * loss_smooth(field)
