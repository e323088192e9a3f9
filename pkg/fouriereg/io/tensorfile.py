"""The ``BLT1`` tensor file format and atomic file writes.

Layout: magic ``BLT1``, dtype code (u8), ndim (u8), ndim u64 dims, then the
row-major payload. All multi-byte values are little-endian.
"""

import os
import tempfile
from pathlib import Path

import numpy as np
import torch

from ..core.tensor import ShapeError, numel

MAGIC = b"BLT1"
HEADER_SIZE = len(MAGIC) + 2

_CODES: dict[int, np.dtype] = {
    0: np.dtype("<f4"),
    1: np.dtype("<f8"),
    2: np.dtype("<c8"),
    3: np.dtype("<i4"),
}

_INTEGER_DTYPES = (torch.int8, torch.uint8, torch.int16, torch.int32, torch.int64)


class TensorFileError(ValueError):
    """Malformed or unsupported tensor file."""


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write ``data`` to a temporary sibling of ``path``, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        dir=path.parent, prefix=f".{path.name}.", suffix=".tmp"
    )
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _code_for(tensor: torch.Tensor) -> int:
    if tensor.dtype == torch.float32:
        return 0
    if tensor.dtype == torch.float64:
        return 1
    if tensor.dtype == torch.complex64:
        return 2
    if tensor.dtype == torch.complex128:
        raise TensorFileError(
            "complex128 has no dtype code; convert to complex64 explicitly"
        )
    if tensor.dtype in _INTEGER_DTYPES:
        return 3
    raise TensorFileError(f"unsupported tensor dtype {tensor.dtype}")


def encode_tensor(tensor: torch.Tensor) -> bytes:
    """Serialize ``tensor``; integer labels are stored as int32."""
    shape = tuple(tensor.shape)
    if not 1 <= len(shape) <= 255:
        raise TensorFileError(f"tensor rank must be 1..255, got {len(shape)}")
    try:
        numel(shape)
    except ShapeError as e:
        raise TensorFileError(str(e)) from e

    code = _code_for(tensor)
    array = tensor.detach().cpu().numpy()
    if code == 3:
        info = np.iinfo(np.int32)
        if array.size and (array.min() < info.min or array.max() > info.max):
            raise TensorFileError("label values do not fit in int32")
    payload = np.ascontiguousarray(array, dtype=_CODES[code]).tobytes()
    dims = np.asarray(shape, dtype="<u8").tobytes()
    header = MAGIC + bytes([code, len(shape)]) + dims
    return header + payload


def decode_tensor(data: bytes) -> torch.Tensor:
    if len(data) < HEADER_SIZE:
        raise TensorFileError(f"truncated header: {len(data)} bytes")
    if data[: len(MAGIC)] != MAGIC:
        raise TensorFileError(f"bad magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}")
    code, ndim = data[len(MAGIC)], data[len(MAGIC) + 1]
    if code not in _CODES:
        raise TensorFileError(f"unknown dtype code {code}")
    if ndim == 0:
        raise TensorFileError("tensor file declares zero dimensions")
    dims_end = HEADER_SIZE + 8 * ndim
    if len(data) < dims_end:
        raise TensorFileError(f"truncated header: {ndim} dims need {dims_end} bytes")
    dims = np.frombuffer(data, dtype="<u8", count=ndim, offset=HEADER_SIZE)
    shape = tuple(int(n) for n in dims)
    try:
        count = numel(shape)
    except ShapeError as e:
        raise TensorFileError(f"invalid dims: {e}") from e

    dtype = _CODES[code]
    expected = count * dtype.itemsize
    payload = len(data) - dims_end
    if payload < expected:
        raise TensorFileError(
            f"truncated payload: {payload} bytes, expected {expected} for shape {shape}"
        )
    if payload > expected:
        raise TensorFileError(f"{payload - expected} trailing bytes after payload")
    array = np.frombuffer(data, dtype=dtype, count=count, offset=dims_end)
    array = array.reshape(shape)
    return torch.from_numpy(array.astype(dtype.newbyteorder("="), copy=True))


def write_tensor(path: str | Path, tensor: torch.Tensor) -> None:
    atomic_write_bytes(path, encode_tensor(tensor))


def read_tensor(path: str | Path) -> torch.Tensor:
    path = Path(path)
    try:
        return decode_tensor(path.read_bytes())
    except TensorFileError as e:
        raise TensorFileError(f"{path}: {e}") from e
