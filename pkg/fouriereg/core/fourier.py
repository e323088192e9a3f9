"""Discrete Fourier transforms and the band-limited crop/pad codec.

Spectra follow the unnormalized-forward / 1/N-inverse convention. A
"centered" spectrum has its DC term at index N//2 of every transformed axis;
a band-limited patch is the centered low-frequency block of extent N/r.
"""

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import torch

from ..logging.setup import get_logger

logger = get_logger(__name__)

RESIDUE_TOLERANCE = 1e-3


class FourierError(ValueError):
    """Invalid transform axes or inconsistent band-limited metadata."""


def trailing_axes(dims: int) -> tuple[int, ...]:
    """The last ``dims`` axes, as negative indices."""
    if dims < 1:
        raise FourierError("transform needs at least one axis")
    return tuple(range(-dims, 0))


def _axes(axes: Sequence[int] | None) -> tuple[int, ...]:
    if axes is None or len(axes) == 0:
        raise FourierError("empty axis list")
    return tuple(axes)


def dft(x: torch.Tensor, axes: Sequence[int]) -> torch.Tensor:
    """Unnormalized forward DFT over ``axes``; DC lands at index 0."""
    return torch.fft.fftn(x, dim=_axes(axes))


def idft(X: torch.Tensor, axes: Sequence[int]) -> torch.Tensor:
    """Inverse DFT over ``axes`` carrying the 1/N normalization."""
    return torch.fft.ifftn(X, dim=_axes(axes))


def center_shift(X: torch.Tensor, axes: Sequence[int] | None = None) -> torch.Tensor:
    """Move the DC term from the corner to index N//2."""
    return torch.fft.fftshift(X, dim=None if axes is None else tuple(axes))


def center_unshift(X: torch.Tensor, axes: Sequence[int] | None = None) -> torch.Tensor:
    """Move the DC term from index N//2 back to the corner."""
    return torch.fft.ifftshift(X, dim=None if axes is None else tuple(axes))


def _check_reduction(
    full_shape: Sequence[int], reduction: Sequence[int]
) -> tuple[int, ...]:
    if len(full_shape) != len(reduction):
        raise FourierError(
            f"reduction {tuple(reduction)} does not match shape {tuple(full_shape)}"
        )
    patch = []
    for n, r in zip(full_shape, reduction):
        if r < 1 or (r != 1 and r % 2):
            raise FourierError(
                f"reduction factors must be 1 or even, got {tuple(reduction)}"
            )
        if n % r:
            raise FourierError(f"reduction {r} does not divide axis of length {n}")
        if r != 1 and (n // r) % 2:
            raise FourierError(f"patch extent {n // r} (= {n}/{r}) is odd")
        patch.append(n // r)
    return tuple(patch)


def _block(full_shape: Sequence[int], reduction: Sequence[int]) -> tuple[slice, ...]:
    patch = _check_reduction(full_shape, reduction)
    starts = [(n - m) // 2 for n, m in zip(full_shape, patch)]
    return tuple(slice(s, s + m) for s, m in zip(starts, patch))


@dataclass(frozen=True)
class BandLimitedPatch:
    """Centered low-frequency coefficients of a field or image.

    ``coeffs`` has shape ``(..., *patch_shape)``; the trailing axes are the
    spatial frequencies, the leading ones are batch/channel axes.
    """

    coeffs: torch.Tensor
    full_shape: tuple[int, ...]
    reduction: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "full_shape", tuple(int(n) for n in self.full_shape))
        object.__setattr__(self, "reduction", tuple(int(r) for r in self.reduction))
        patch = _check_reduction(self.full_shape, self.reduction)
        if not self.coeffs.is_complex():
            raise FourierError(
                f"patch coefficients must be complex, got {self.coeffs.dtype}"
            )
        if tuple(self.coeffs.shape[-len(patch) :]) != patch:
            raise FourierError(
                f"patch of shape {tuple(self.coeffs.shape)} is inconsistent with "
                f"full shape {self.full_shape} and reduction {self.reduction}"
            )

    @property
    def dims(self) -> int:
        return len(self.full_shape)

    @property
    def axes(self) -> tuple[int, ...]:
        return trailing_axes(self.dims)

    @property
    def patch_shape(self) -> tuple[int, ...]:
        return tuple(self.coeffs.shape[-self.dims :])

    def with_coeffs(self, coeffs: torch.Tensor) -> "BandLimitedPatch":
        return BandLimitedPatch(coeffs, self.full_shape, self.reduction)


def freq_mask(
    full_shape: Sequence[int],
    reduction: Sequence[int],
    dtype: torch.dtype = torch.float64,
) -> torch.Tensor:
    """{0,1} mask over the centered grid, ones on the patch block."""
    mask = torch.zeros(tuple(full_shape), dtype=dtype)
    mask[_block(full_shape, reduction)] = 1
    return mask


def strict_mask(
    full_shape: Sequence[int],
    reduction: Sequence[int],
    dtype: torch.dtype = torch.float64,
) -> torch.Tensor:
    """``freq_mask`` without the block's unpaired lowest-frequency (Nyquist) lines.

    Spectra supported inside it are Hermitian-closed, so their fields are real.
    """
    mask = freq_mask(full_shape, reduction, dtype)
    for axis, (block, r) in enumerate(zip(_block(full_shape, reduction), reduction)):
        if r > 1:
            index = [slice(None)] * len(full_shape)
            index[axis] = block.start
            mask[tuple(index)] = 0
    return mask


def crop_center(X: torch.Tensor, reduction: Sequence[int]) -> BandLimitedPatch:
    """Cut the centered low-frequency block out of a centered spectrum."""
    dims = len(reduction)
    if X.dim() < dims:
        raise FourierError(
            f"tensor of shape {tuple(X.shape)} has fewer than {dims} axes"
        )
    full_shape = tuple(X.shape[-dims:])
    lead = (slice(None),) * (X.dim() - dims)
    coeffs = X[lead + _block(full_shape, reduction)]
    if not coeffs.is_complex():
        wide = X.dtype == torch.float64
        coeffs = coeffs.to(torch.complex128 if wide else torch.complex64)
    return BandLimitedPatch(coeffs, full_shape, tuple(reduction))


def pad_center(patch: BandLimitedPatch) -> torch.Tensor:
    """Zero-pad a patch back to its full centered spectrum."""
    lead = tuple(patch.coeffs.shape[: -patch.dims])
    full = patch.coeffs.new_zeros(lead + patch.full_shape)
    full[(slice(None),) * len(lead) + _block(patch.full_shape, patch.reduction)] = (
        patch.coeffs
    )
    return full


def zero_nyquist(patch: BandLimitedPatch) -> BandLimitedPatch:
    """Zero the unpaired Nyquist lines of the patch (reduced axes only)."""
    keep = torch.ones(patch.patch_shape, dtype=patch.coeffs.real.dtype)
    for axis, r in enumerate(patch.reduction):
        if r > 1:
            index = [slice(None)] * patch.dims
            index[axis] = 0
            keep[tuple(index)] = 0
    return patch.with_coeffs(patch.coeffs * keep.to(patch.coeffs.device))


def spatial_to_patch(
    spatial: torch.Tensor, full_shape: Sequence[int]
) -> BandLimitedPatch:
    """DFT layer: a reduced-resolution spatial map becomes a centered patch."""
    dims = len(full_shape)
    patch_shape = tuple(spatial.shape[-dims:])
    reduction = []
    for n, m in zip(full_shape, patch_shape):
        if n % m:
            raise FourierError(f"patch extent {m} does not divide full extent {n}")
        reduction.append(n // m)
    axes = trailing_axes(dims)
    coeffs = center_shift(dft(spatial, axes), axes)
    return BandLimitedPatch(coeffs, tuple(full_shape), tuple(reduction))


def patch_to_spatial(patch: BandLimitedPatch) -> torch.Tensor:
    """Inverse of ``spatial_to_patch`` at the patch resolution (complex)."""
    return idft(center_unshift(patch.coeffs, patch.axes), patch.axes)


def _reconstruct(patch: BandLimitedPatch) -> torch.Tensor:
    return idft(center_unshift(pad_center(patch), patch.axes), patch.axes)


def imaginary_residue(patch: BandLimitedPatch) -> float:
    """Largest imaginary magnitude left after decoding ``patch``."""
    with torch.no_grad():
        return float(_reconstruct(patch).imag.abs().max())


class DecodedField(NamedTuple):
    """Real decoded field and the largest imaginary magnitude that was dropped."""

    field: torch.Tensor
    residue: float


def decode_with_residue(patch: BandLimitedPatch) -> DecodedField:
    """Model-driven decoder that also reports the imaginary residue."""
    full = _reconstruct(patch)
    field = full.real
    with torch.no_grad():
        residue = float(full.imag.abs().max())
        scale = float(field.norm())
    if residue > RESIDUE_TOLERANCE * scale:
        logger.warning(
            f"Decoded field keeps imaginary residue {residue:.3e} "
            f"(real norm {scale:.3e})"
        )
    return DecodedField(field, residue)


def decode_field(patch: BandLimitedPatch, check_residue: bool = True) -> torch.Tensor:
    """Model-driven decoder: zero-pad, unshift, iDFT, real part."""
    if check_residue:
        return decode_with_residue(patch).field
    return _reconstruct(patch).real


def encode_band_limited_image(
    image: torch.Tensor, reduction: Sequence[int]
) -> torch.Tensor:
    """Model-driven encoder: the band-limited image at reduced resolution.

    For a band-limited input the result equals the subsampled image scaled by
    the product of the reductions.
    """
    dims = len(reduction)
    full_shape = tuple(image.shape[-dims:])
    if any(n % r for n, r in zip(full_shape, reduction)):
        raise FourierError(
            f"image shape {full_shape} is not divisible by reduction {tuple(reduction)}"
        )
    axes = trailing_axes(dims)
    patch = crop_center(center_shift(dft(image, axes), axes), reduction)
    return patch_to_spatial(patch).real


def random_band_limited(
    shape: Sequence[int],
    reduction: Sequence[int],
    generator: torch.Generator | None = None,
    dtype: torch.dtype = torch.float64,
) -> torch.Tensor:
    """Random real tensor whose spectrum lies inside ``strict_mask``.

    ``shape`` is ``(..., *spatial)`` with ``len(reduction)`` spatial axes.
    """
    dims = len(reduction)
    spatial = tuple(shape[-dims:])
    real = torch.randn(tuple(shape), generator=generator, dtype=torch.float64)
    imag = torch.randn(tuple(shape), generator=generator, dtype=torch.float64)
    spectrum = torch.complex(real, imag) * strict_mask(spatial, reduction)
    axes = trailing_axes(dims)
    field = idft(center_unshift(spectrum, axes), axes).real
    return field.to(dtype)


def spectral_energy_outside(field: torch.Tensor, reduction: Sequence[int]) -> float:
    """Fraction of spectral energy of ``field`` outside the FreqMask."""
    dims = len(reduction)
    axes = trailing_axes(dims)
    power = center_shift(dft(field.to(torch.float64), axes), axes).abs() ** 2
    mask = freq_mask(tuple(field.shape[-dims:]), reduction)
    total = float(power.sum())
    if total == 0.0:
        return 0.0
    return float((power * (1 - mask)).sum()) / total
