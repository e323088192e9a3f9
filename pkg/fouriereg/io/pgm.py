"""Binary (P5) PGM images."""

from pathlib import Path

import numpy as np
import torch

from .tensorfile import atomic_write_bytes


class PGMError(ValueError):
    """Malformed or unsupported PGM file."""


def _header(data: bytes) -> tuple[list[int], int]:
    """Parse ``P5 width height maxval``; return the values and the payload offset."""
    if data[:2] != b"P5":
        raise PGMError(f"unsupported PGM magic {data[:2]!r}, only binary P5 is read")
    values: list[int] = []
    pos = 2
    while len(values) < 3:
        if pos >= len(data):
            raise PGMError("truncated PGM header")
        byte = data[pos : pos + 1]
        if byte.isspace():
            pos += 1
        elif byte == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        else:
            start = pos
            while pos < len(data) and data[pos : pos + 1].isdigit():
                pos += 1
            if start == pos:
                raise PGMError(f"unexpected byte {byte!r} in PGM header")
            values.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise PGMError("PGM header must end with a single whitespace byte")
    return values, pos + 1


def read_pgm(path: str | Path, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Read a P5 image as an ``(H, W)`` tensor scaled by ``1 / maxval``."""
    data = Path(path).read_bytes()
    (width, height, maxval), offset = _header(data)
    if width <= 0 or height <= 0:
        raise PGMError(f"invalid PGM size {width}x{height}")
    if not 0 < maxval <= 65535:
        raise PGMError(f"maxval must be in 1..65535, got {maxval}")
    sample = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    expected = width * height * sample.itemsize
    if len(data) - offset < expected:
        raise PGMError(
            f"truncated PGM payload: {len(data) - offset} of {expected} bytes"
        )
    pixels = np.frombuffer(data, dtype=sample, count=width * height, offset=offset)
    image = pixels.reshape(height, width).astype(np.float64) / maxval
    return torch.from_numpy(image).to(dtype)


def write_pgm(path: str | Path, image: torch.Tensor, maxval: int = 255) -> None:
    """Write an ``(H, W)`` image in [0, 1] (values are clamped) as P5."""
    if image.dim() != 2:
        raise PGMError(f"PGM images are 2D, got shape {tuple(image.shape)}")
    if not 0 < maxval <= 65535:
        raise PGMError(f"maxval must be in 1..65535, got {maxval}")
    height, width = image.shape
    values = np.rint(image.detach().cpu().double().clamp(0, 1).numpy() * maxval)
    sample = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    atomic_write_bytes(path, header + values.astype(sample).tobytes())
