"""Deformation algebra in voxel units.

Fields are batched ``(B, D, *spatial)`` tensors whose channel ``k`` is the
displacement along spatial axis ``k``; images are ``(B, C, *spatial)``. A
displacement ``u`` maps ``x`` to ``x + u(x)``.
"""

import itertools
from typing import Sequence

import torch
import torch.nn.functional as F

from .tensor import check_same_shape, row_major_strides


class DeformError(ValueError):
    """Invalid field rank or mismatched field/image shapes."""


def identity_grid(
    spatial_shape: Sequence[int],
    dtype: torch.dtype = torch.float64,
    device: torch.device | str | None = None,
) -> torch.Tensor:
    """Voxel coordinates ``grid[k][x] = x_k`` with shape ``(D, *spatial)``."""
    shape = tuple(spatial_shape)
    if len(shape) not in (1, 2, 3):
        raise DeformError(f"identity grid needs rank 1 to 3, got shape {shape}")
    axes = [torch.arange(n, dtype=dtype, device=device) for n in shape]
    return torch.stack(torch.meshgrid(*axes, indexing="ij"))


def field_rank(u: torch.Tensor) -> int:
    """Spatial rank of a batched field, validating its channel count."""
    dims = u.dim() - 2
    if dims not in (2, 3) or u.shape[1] != dims:
        raise DeformError(
            f"field of shape {tuple(u.shape)} is not (B, D, *spatial) with D in (2, 3)"
        )
    return dims


def warp(image: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
    """Sample ``image`` at ``x + u(x)`` by multilinear interpolation.

    Sample coordinates are clamped to the grid, so out-of-domain points take
    border values. Exact at ``u == 0``.
    """
    dims = field_rank(u)
    spatial = tuple(u.shape[2:])
    if image.dim() != dims + 2 or tuple(image.shape[2:]) != spatial:
        raise DeformError(
            f"image of shape {tuple(image.shape)} does not match field {tuple(u.shape)}"
        )
    if image.shape[0] != u.shape[0]:
        raise DeformError(
            f"batch sizes differ: image {image.shape[0]}, field {u.shape[0]}"
        )

    batch, channels = image.shape[:2]
    coords = identity_grid(spatial, dtype=u.dtype, device=u.device) + u
    lows, highs, fracs = [], [], []
    for axis, n in enumerate(spatial):
        c = coords[:, axis].clamp(0, n - 1)
        # NaN coordinates reach the output through the weights, not the indices
        low = torch.floor(torch.nan_to_num(c.detach()))
        fracs.append((c - low).to(image.dtype))
        low = low.long()
        lows.append(low)
        highs.append((low + 1).clamp(max=n - 1))

    strides = row_major_strides(spatial)
    flat = image.reshape(batch, channels, -1)
    out = torch.zeros_like(image)
    for corner in itertools.product((0, 1), repeat=dims):
        index = torch.zeros_like(lows[0])
        weight = torch.ones_like(fracs[0])
        for axis, bit in enumerate(corner):
            index = index + (highs if bit else lows)[axis] * strides[axis]
            weight = weight * (fracs[axis] if bit else 1 - fracs[axis])
        gathered = torch.gather(
            flat, 2, index.reshape(batch, 1, -1).expand(batch, channels, -1)
        )
        out = out + weight.unsqueeze(1) * gathered.reshape(image.shape)
    return out


def compose(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Displacement ``w`` with ``warp(warp(I, u), v) == warp(I, w)``.

    ``w(x) = v(x) + u(x + v(x))``.
    """
    check_same_shape(u, v, "composed fields")
    return v + warp(u, v)


def exp_svf(v: torch.Tensor, steps: int = 7) -> torch.Tensor:
    """Scaling and squaring: displacement of ``Exp(v)``."""
    if steps < 1:
        raise DeformError(f"scaling and squaring needs steps >= 1, got {steps}")
    u = v / (2**steps)
    for _ in range(steps):
        u = compose(u, u)
    return u


def jacobian_det(u: torch.Tensor) -> torch.Tensor:
    """Per-voxel determinant of the Jacobian of ``x + u(x)``, shape ``(B, *spatial)``.

    Central differences inside, one-sided at the borders.
    """
    dims = field_rank(u)
    spatial_axes = tuple(range(1, dims + 1))
    # J[i][k] = d(x_i + u_i) / dx_k
    J = [list(torch.gradient(u[:, i], dim=spatial_axes)) for i in range(dims)]
    for i in range(dims):
        J[i][i] = J[i][i] + 1
    if dims == 2:
        return J[0][0] * J[1][1] - J[0][1] * J[1][0]
    return (
        J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1])
        - J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0])
        + J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0])
    )


def neg_jac_fraction(u: torch.Tensor) -> float:
    """Percentage of voxels with a non-positive Jacobian determinant."""
    det = jacobian_det(u)
    return 100.0 * float((det <= 0).sum()) / det.numel()


def _linear_mode(dims: int) -> str:
    return "bilinear" if dims == 2 else "trilinear"


def resize_image(image: torch.Tensor, size: Sequence[int]) -> torch.Tensor:
    """Bilinear/trilinear image resize."""
    return F.interpolate(
        image, size=tuple(size), mode=_linear_mode(image.dim() - 2), align_corners=False
    )


def resize_field(u: torch.Tensor, size: Sequence[int]) -> torch.Tensor:
    """Resize a displacement field, rescaling each channel to the new voxel units."""
    dims = field_rank(u)
    resized = resize_image(u, size)
    ratios = [new / old for new, old in zip(size, u.shape[2:])]
    scale = torch.tensor(ratios, dtype=u.dtype, device=u.device)
    return resized * scale.reshape((1, dims) + (1,) * dims)
