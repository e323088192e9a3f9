"""Tensor value type helpers.

Tensors are ``torch.Tensor`` values. This module pins down the dtype set, the
row-major addressing rules and elementwise arithmetic without broadcasting
(scalars excepted), so shape bugs surface as errors instead of silent
expansion.
"""

import math
from enum import Enum
from typing import Callable, Sequence

import torch


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class DTypeError(TypeError):
    """Operands have dtypes without a defined promotion."""


class DType(str, Enum):
    """Supported scalar types."""

    REAL32 = "real32"
    REAL64 = "real64"
    COMPLEX64 = "complex64"
    COMPLEX128 = "complex128"

    @property
    def torch_dtype(self) -> torch.dtype:
        return _TORCH_DTYPES[self]

    @property
    def is_complex(self) -> bool:
        return self in (DType.COMPLEX64, DType.COMPLEX128)

    @classmethod
    def of(cls, value: torch.Tensor | torch.dtype) -> "DType":
        dtype = value.dtype if isinstance(value, torch.Tensor) else value
        for member, candidate in _TORCH_DTYPES.items():
            if candidate == dtype:
                return member
        raise DTypeError(f"unsupported dtype {dtype}")


_TORCH_DTYPES = {
    DType.REAL32: torch.float32,
    DType.REAL64: torch.float64,
    DType.COMPLEX64: torch.complex64,
    DType.COMPLEX128: torch.complex128,
}

_REAL_OF = {
    DType.REAL32: DType.REAL32,
    DType.REAL64: DType.REAL64,
    DType.COMPLEX64: DType.REAL32,
    DType.COMPLEX128: DType.REAL64,
}


def promote(a: DType, b: DType) -> DType:
    """Result dtype of a binary op on ``a`` and ``b``."""
    wide = _REAL_OF[a] == DType.REAL64 or _REAL_OF[b] == DType.REAL64
    if a.is_complex or b.is_complex:
        return DType.COMPLEX128 if wide else DType.COMPLEX64
    return DType.REAL64 if wide else DType.REAL32


def row_major_strides(shape: Sequence[int]) -> tuple[int, ...]:
    """Element strides of a contiguous row-major array."""
    strides = [1] * len(shape)
    for axis in range(len(shape) - 2, -1, -1):
        strides[axis] = strides[axis + 1] * shape[axis + 1]
    return tuple(strides)


def flat_index(index: Sequence[int], shape: Sequence[int]) -> int:
    """Flat offset of a multi-index under row-major addressing."""
    if len(index) != len(shape):
        raise ShapeError(f"index {tuple(index)} does not match shape {tuple(shape)}")
    for i, n in zip(index, shape):
        if not 0 <= i < n:
            raise IndexError(f"index {tuple(index)} out of range for {tuple(shape)}")
    return sum(i * s for i, s in zip(index, row_major_strides(shape)))


def numel(shape: Sequence[int]) -> int:
    """Number of stored scalars for ``shape``; every axis must be positive."""
    if any(n <= 0 for n in shape):
        raise ShapeError(f"shape axes must be positive, got {tuple(shape)}")
    return math.prod(shape)


def check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str = "operands") -> None:
    """Raise ``ShapeError`` naming both shapes if they differ."""
    if a.shape != b.shape:
        raise ShapeError(
            f"{what} have mismatched shapes {tuple(a.shape)} and {tuple(b.shape)}"
        )


_BINARY: dict[str, Callable[[torch.Tensor, torch.Tensor], torch.Tensor]] = {
    "add": torch.add,
    "sub": torch.sub,
    "mul": torch.mul,
}

_UNARY: dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "conj": lambda x: torch.conj(x).resolve_conj(),
    "real": lambda x: torch.real(x).clone() if x.is_complex() else x.clone(),
    "imag": lambda x: (
        torch.imag(x).clone() if x.is_complex() else torch.zeros_like(x)
    ),
    "abs": torch.abs,
}


def elementwise(
    op: str, a: torch.Tensor, b: torch.Tensor | float | complex | None = None
) -> torch.Tensor:
    """Apply one of ``add sub mul scale conj real imag abs``.

    Binary ops need equal shapes; only Python scalars broadcast.
    """
    kind = DType.of(a)
    if op in _UNARY:
        return _UNARY[op](a)
    if op == "scale":
        if not isinstance(b, (int, float, complex)):
            raise DTypeError(f"scale expects a scalar factor, got {type(b).__name__}")
        if isinstance(b, complex) and not kind.is_complex:
            return a.to(promote(kind, DType.COMPLEX64).torch_dtype) * b
        return a * b
    if op not in _BINARY:
        raise ValueError(f"unknown elementwise op {op!r}")
    if isinstance(b, (int, float, complex)):
        return _BINARY[op](a, b)
    if not isinstance(b, torch.Tensor):
        raise DTypeError(f"{op} expects a tensor or scalar, got {type(b).__name__}")
    check_same_shape(a, b, op)
    target = promote(kind, DType.of(b)).torch_dtype
    return _BINARY[op](a.to(target), b.to(target))
