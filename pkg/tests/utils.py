"""Utility functions and scalar oracles for testing."""

import itertools
import math
from typing import Sequence

import numpy as np
import torch

from fouriereg.core.fourier import random_band_limited


def gaussian_blob(
    shape: Sequence[int], center: Sequence[float], sigma: float
) -> torch.Tensor:
    """A float64 Gaussian bump."""
    axes = [torch.arange(n, dtype=torch.float64) for n in shape]
    grid = torch.meshgrid(*axes, indexing="ij")
    dist2 = sum((g - c) ** 2 for g, c in zip(grid, center))
    return torch.exp(-dist2 / (2 * sigma**2))


def border_window(shape: Sequence[int]) -> torch.Tensor:
    """Product of sin^2 bumps; zero on the grid border."""
    window = torch.ones(tuple(shape), dtype=torch.float64)
    for axis, n in enumerate(shape):
        ramp = torch.sin(math.pi * torch.arange(n, dtype=torch.float64) / (n - 1)) ** 2
        view = [1] * len(shape)
        view[axis] = n
        window = window * ramp.reshape(view)
    return window


def smooth_field(
    batch: int,
    shape: Sequence[int],
    peak: float,
    generator: torch.Generator,
    reduction: int = 16,
    windowed: bool = False,
) -> torch.Tensor:
    """Band-limited ``(B, D, *shape)`` field with ``max |u| == peak`` per sample."""
    dims = len(shape)
    full = (batch, dims) + tuple(shape)
    u = random_band_limited(full, (reduction,) * dims, generator)
    if windowed:
        u = u * border_window(shape)
    scale = u.abs().flatten(1).max(dim=1).values
    return u * (peak / scale).reshape((batch,) + (1,) * (dims + 1))


def bilinear_oracle(image: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Scalar-loop bilinear sampling of a 2D image at x + u(x), clamped."""
    H, W = image.shape
    out = np.zeros_like(image)
    for i, j in itertools.product(range(H), range(W)):
        y = min(max(i + u[0, i, j], 0.0), H - 1.0)
        x = min(max(j + u[1, i, j], 0.0), W - 1.0)
        y0, x0 = int(math.floor(y)), int(math.floor(x))
        y1, x1 = min(y0 + 1, H - 1), min(x0 + 1, W - 1)
        fy, fx = y - y0, x - x0
        out[i, j] = (
            (1 - fy) * (1 - fx) * image[y0, x0]
            + (1 - fy) * fx * image[y0, x1]
            + fy * (1 - fx) * image[y1, x0]
            + fy * fx * image[y1, x1]
        )
    return out


def conv2d_oracle(
    x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int = 1
) -> np.ndarray:
    """Scalar-loop zero-padded cross-correlation; ``x`` is (C, H, W)."""
    out_ch, in_ch, k, _ = weight.shape
    pad = k // 2
    C, H, W = x.shape
    padded = np.zeros((C, H + 2 * pad, W + 2 * pad))
    padded[:, pad : pad + H, pad : pad + W] = x
    Ho = (H + 2 * pad - k) // stride + 1
    Wo = (W + 2 * pad - k) // stride + 1
    out = np.zeros((out_ch, Ho, Wo))
    for o, i, j in itertools.product(range(out_ch), range(Ho), range(Wo)):
        patch = padded[:, i * stride : i * stride + k, j * stride : j * stride + k]
        out[o, i, j] = np.sum(patch * weight[o]) + bias[o]
    return out


def jacobian_oracle(u: np.ndarray) -> np.ndarray:
    """Scalar-loop det of I + grad u for a (2, H, W) field.

    Central differences inside, one-sided at the borders.
    """
    _, H, W = u.shape

    def d(channel: int, axis: int, i: int, j: int) -> float:
        n = H if axis == 0 else W
        pos = i if axis == 0 else j

        def at(p: int) -> float:
            return u[channel, p, j] if axis == 0 else u[channel, i, p]

        if pos == 0:
            return at(1) - at(0)
        if pos == n - 1:
            return at(n - 1) - at(n - 2)
        return (at(pos + 1) - at(pos - 1)) / 2

    det = np.zeros((H, W))
    for i, j in itertools.product(range(H), range(W)):
        a = 1 + d(0, 0, i, j)
        b = d(0, 1, i, j)
        c = d(1, 0, i, j)
        e = 1 + d(1, 1, i, j)
        det[i, j] = a * e - b * c
    return det


def ncc_oracle(a: np.ndarray, b: np.ndarray, window: int, eps: float = 1e-5) -> float:
    """Scalar-loop negative mean local NCC of 2D images, clipped windows."""
    H, W = a.shape
    r = window // 2
    values = []
    for i, j in itertools.product(range(H), range(W)):
        rows = slice(max(i - r, 0), min(i + r + 1, H))
        cols = slice(max(j - r, 0), min(j + r + 1, W))
        wa, wb = a[rows, cols], b[rows, cols]
        ma, mb = wa.mean(), wb.mean()
        cross = np.sum((wa - ma) * (wb - mb))
        var_a = np.sum((wa - ma) ** 2)
        var_b = np.sum((wb - mb) ** 2)
        values.append(cross / math.sqrt(var_a * var_b + eps))
    return -float(np.mean(values))
