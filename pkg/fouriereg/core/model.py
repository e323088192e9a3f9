"""Registration networks.

A ``LayerPlan`` lays out the convolutions of one cascade; ``ConvNet`` runs
it, and ``RegistrationModel`` wires one ``ConvNet`` per cascade into the
full pipeline (optional band-limited image encoder, CNN, DFT layer, Fourier
decoder, composition across cascades, scaling and squaring).
"""

import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from ..config.settings import NetVariant
from ..logging.setup import get_logger
from .deform import compose, exp_svf, resize_field, resize_image, warp
from .fourier import (
    BandLimitedPatch,
    decode_with_residue,
    encode_band_limited_image,
    spatial_to_patch,
    zero_nyquist,
)
from .tensor import ShapeError

logger = get_logger(__name__)

# Stride-2 stages of the full contracting path; the deepest level is 1/16.
DEPTH = 4
PRELU_INIT = 0.25

ModelParams = dict[str, torch.Tensor]

__all__ = [
    "DEPTH",
    "ConvSpec",
    "ConvNet",
    "ConvUnit",
    "CostReport",
    "LayerPlan",
    "ModelParams",
    "NetVariant",
    "RegistrationModel",
    "RegistrationOutput",
    "VariantError",
    "build",
    "build_plan",
    "conv_forward",
    "count_costs",
    "prelu",
]


class VariantError(ValueError):
    """Inconsistent network variant or input geometry."""


@dataclass(frozen=True)
class ConvSpec:
    """One convolution: zero padding ``kernel // 2``, optional PReLU."""

    name: str
    in_ch: int
    out_ch: int
    dims: int = 2
    kernel: int = 3
    stride: int = 1
    transpose: bool = False
    activation: bool = True

    def __post_init__(self) -> None:
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise VariantError(f"{self.name}: kernel must be odd, got {self.kernel}")
        if self.stride not in (1, 2):
            raise VariantError(f"{self.name}: stride must be 1 or 2, got {self.stride}")
        if self.transpose and self.stride != 2:
            raise VariantError(f"{self.name}: transpose convolutions upsample by 2")
        if self.in_ch < 1 or self.out_ch < 1:
            raise VariantError(f"{self.name}: channel counts must be positive")
        if self.dims not in (2, 3):
            raise VariantError(f"{self.name}: dims must be 2 or 3, got {self.dims}")

    @property
    def weight_shape(self) -> tuple[int, ...]:
        taps = (self.kernel,) * self.dims
        if self.transpose:
            return (self.in_ch, self.out_ch) + taps
        return (self.out_ch, self.in_ch) + taps

    @property
    def fan_in(self) -> int:
        return self.in_ch * self.kernel**self.dims

    @property
    def params(self) -> int:
        """Learnable weights plus biases."""
        return self.in_ch * self.out_ch * self.kernel**self.dims + self.out_ch

    def output_shape(self, spatial: Sequence[int]) -> tuple[int, ...]:
        if self.transpose:
            return tuple(2 * n for n in spatial)
        if self.stride == 2:
            return tuple((n + 1) // 2 for n in spatial)
        return tuple(spatial)

    def mult_adds(self, spatial: Sequence[int]) -> int:
        """Multiply-accumulates for an input of the given spatial shape."""
        voxels = math.prod(spatial if self.transpose else self.output_shape(spatial))
        return voxels * self.in_ch * self.out_ch * self.kernel**self.dims

    def describe(self) -> str:
        kind = "convT" if self.transpose else "conv"
        taps = "x".join([str(self.kernel)] * self.dims)
        text = f"{kind} {taps} s{self.stride} {self.in_ch}->{self.out_ch}"
        return f"{text} +prelu" if self.activation else text


@dataclass(frozen=True)
class EncoderStage:
    level: int
    same: ConvSpec
    down: ConvSpec


@dataclass(frozen=True)
class DecoderStage:
    level: int
    up: ConvSpec
    fuse: ConvSpec
    conv: ConvSpec


@dataclass(frozen=True)
class LayerPlan:
    """Convolution layout of one cascade.

    Level ``l`` runs at resolution ``1/2**l`` with ``C * 2**l`` channels.
    """

    variant: NetVariant
    input_level: int
    field_level: int
    stem: ConvSpec
    encoder: tuple[EncoderStage, ...]
    decoder: tuple[DecoderStage, ...]
    head: ConvSpec

    def specs(self) -> Iterator[tuple[int, ConvSpec]]:
        """Every convolution in execution order, with the level of its input."""
        yield self.input_level, self.stem
        for stage in self.encoder:
            yield stage.level, stage.same
            yield stage.level, stage.down
        for stage in self.decoder:
            yield stage.level + 1, stage.up
            yield stage.level, stage.fuse
            yield stage.level, stage.conv
        yield self.field_level, self.head

    @property
    def downsamples(self) -> int:
        return sum(
            1 for _, spec in self.specs() if spec.stride == 2 and not spec.transpose
        )

    @property
    def upsamples(self) -> int:
        return sum(1 for _, spec in self.specs() if spec.transpose)

    @property
    def net_halvings(self) -> int:
        """Stride-2 stages between the CNN input and output resolutions."""
        return self.downsamples - self.upsamples

    def rows(self, spatial_shape: Sequence[int]) -> list[dict[str, Any]]:
        """Per-layer summary for a full-resolution input of ``spatial_shape``."""
        rows = []
        for level, spec in self.specs():
            shape_in = tuple(n // 2**level for n in spatial_shape)
            rows.append(
                {
                    "name": spec.name,
                    "layer": spec.describe(),
                    "output": list(spec.output_shape(shape_in)),
                    "params": spec.params,
                    "mult_adds": spec.mult_adds(shape_in),
                }
            )
        return rows


def _level(reduction: int) -> int:
    level = int(math.log2(reduction))
    if 2**level != reduction or not 0 <= level <= DEPTH:
        raise VariantError(
            f"reduction {reduction} is not a power of two up to {2**DEPTH}"
        )
    return level


def build_plan(variant: NetVariant) -> LayerPlan:
    """Layer plan of one cascade of ``variant``."""
    input_level = _level(variant.image_reduction)
    field_level = _level(variant.field_reduction)
    if field_level < input_level:
        raise VariantError(
            f"field_reduction {variant.field_reduction} is finer than "
            f"image_reduction {variant.image_reduction}"
        )
    dims = variant.dims

    def ch(level: int) -> int:
        return variant.base_channels * 2**level

    encoder = tuple(
        EncoderStage(
            level,
            ConvSpec(f"enc{level}_same", ch(level), ch(level), dims),
            ConvSpec(f"enc{level}_down", ch(level), ch(level + 1), dims, stride=2),
        )
        for level in range(input_level, DEPTH)
    )
    decoder = tuple(
        DecoderStage(
            level,
            ConvSpec(
                f"dec{level}_up",
                ch(level + 1),
                ch(level + 1),
                dims,
                stride=2,
                transpose=True,
            ),
            ConvSpec(f"dec{level}_fuse", ch(level + 1) + ch(level), ch(level), dims),
            ConvSpec(f"dec{level}_conv", ch(level), ch(level), dims),
        )
        for level in range(DEPTH - 1, field_level - 1, -1)
    )
    return LayerPlan(
        variant=variant,
        input_level=input_level,
        field_level=field_level,
        stem=ConvSpec("stem", 2, ch(input_level), dims),
        encoder=encoder,
        decoder=decoder,
        head=ConvSpec(
            "head", ch(field_level), variant.output_channels, dims, activation=False
        ),
    )


_CONV = {2: F.conv2d, 3: F.conv3d}
_CONV_T = {2: F.conv_transpose2d, 3: F.conv_transpose3d}


def conv_forward(
    x: torch.Tensor, spec: ConvSpec, params: dict[str, torch.Tensor]
) -> torch.Tensor:
    """Cross-correlation with zero padding; stride 2 halves, transpose doubles."""
    if x.dim() != spec.dims + 2 or x.shape[1] != spec.in_ch:
        raise ShapeError(
            f"{spec.name} expects (B, {spec.in_ch}) + {spec.dims} spatial axes, "
            f"got {tuple(x.shape)}"
        )
    weight = params["weight"]
    if tuple(weight.shape) != spec.weight_shape:
        raise ShapeError(
            f"{spec.name} weight has shape {tuple(weight.shape)}, "
            f"expected {spec.weight_shape}"
        )
    bias = params.get("bias")
    pad = spec.kernel // 2
    if spec.transpose:
        return _CONV_T[spec.dims](
            x, weight, bias, stride=2, padding=pad, output_padding=1
        )
    return _CONV[spec.dims](x, weight, bias, stride=spec.stride, padding=pad)


def prelu(x: torch.Tensor, slopes: torch.Tensor) -> torch.Tensor:
    """Per-channel PReLU; the derivative at 0 is taken from the right."""
    if slopes.dim() != 1 or slopes.numel() != x.shape[1]:
        raise ShapeError(
            f"prelu needs one slope per channel: {x.shape[1]} channels, "
            f"slopes of shape {tuple(slopes.shape)}"
        )
    slope = slopes.reshape((1, -1) + (1,) * (x.dim() - 2))
    return torch.where(x >= 0, x, slope * x)


class ConvUnit(nn.Module):
    """A convolution with its bias and optional PReLU slopes."""

    def __init__(self, spec: ConvSpec, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.spec = spec
        self.weight = nn.Parameter(torch.empty(spec.weight_shape, dtype=dtype))
        self.bias = nn.Parameter(torch.zeros(spec.out_ch, dtype=dtype))
        if spec.activation:
            slopes = torch.full((spec.out_ch,), PRELU_INIT, dtype=dtype)
            self.slopes = nn.Parameter(slopes)
        else:
            self.register_parameter("slopes", None)

    def reset_parameters(self, generator: torch.Generator | None = None) -> None:
        bound = 1.0 / math.sqrt(self.spec.fan_in)
        with torch.no_grad():
            self.weight.uniform_(-bound, bound, generator=generator)
            self.bias.zero_()
            if self.slopes is not None:
                self.slopes.fill_(PRELU_INIT)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = conv_forward(x, self.spec, {"weight": self.weight, "bias": self.bias})
        return y if self.slopes is None else prelu(y, self.slopes)


class ConvNet(nn.Module):
    """The CNN of one cascade."""

    def __init__(self, plan: LayerPlan, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.plan = plan
        self.units = nn.ModuleDict(
            {spec.name: ConvUnit(spec, dtype) for _, spec in plan.specs()}
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        units = self.units
        x = units["stem"](x)
        skips: dict[int, torch.Tensor] = {}
        for stage in self.plan.encoder:
            x = units[stage.same.name](x)
            skips[stage.level] = x
            x = units[stage.down.name](x)
        for stage in self.plan.decoder:
            x = units[stage.up.name](x)
            x = torch.cat([x, skips[stage.level]], dim=1)
            x = units[stage.conv.name](units[stage.fuse.name](x))
        return units["head"](x)


@dataclass
class RegistrationOutput:
    """Forward result. ``velocity`` is set for diffeomorphic variants only."""

    displacement: torch.Tensor
    warped: torch.Tensor
    velocity: torch.Tensor | None = None
    increments: list[torch.Tensor] = field(default_factory=list)
    patches: list[BandLimitedPatch | None] = field(default_factory=list)
    residues: list[float | None] = field(default_factory=list)

    @property
    def regularized(self) -> torch.Tensor:
        """The field the smoothness term acts on (``v`` or ``phi``)."""
        return self.displacement if self.velocity is None else self.velocity


class RegistrationModel(nn.Module):
    """Full registration pipeline with one ``ConvNet`` per cascade."""

    def __init__(
        self, variant: NetVariant, plan: LayerPlan, dtype: torch.dtype = torch.float32
    ):
        super().__init__()
        self.variant = variant
        self.plan = plan
        self.nets = nn.ModuleList(ConvNet(plan, dtype) for _ in range(variant.cascades))

    def reset_parameters(self, generator: torch.Generator | None = None) -> None:
        for module in self.modules():
            if isinstance(module, ConvUnit):
                module.reset_parameters(generator)

    def zero_(self) -> "RegistrationModel":
        """Set every parameter to zero; the predicted field is then identically zero."""
        with torch.no_grad():
            for param in self.parameters():
                param.zero_()
        return self

    def params(self) -> ModelParams:
        return dict(self.named_parameters())

    def check_inputs(self, moving: torch.Tensor, fixed: torch.Tensor) -> None:
        if moving.shape != fixed.shape:
            raise ShapeError(
                f"moving {tuple(moving.shape)} and fixed {tuple(fixed.shape)} "
                "differ in shape"
            )
        dims = self.variant.dims
        if moving.dim() != dims + 2 or moving.shape[1] != 1:
            raise ShapeError(
                f"images must be (B, 1) + {dims} spatial axes, "
                f"got {tuple(moving.shape)}"
            )
        r = self.variant.field_reduction
        for n in moving.shape[2:]:
            if n % 2**DEPTH or (r > 1 and (n // r) % 2):
                raise VariantError(
                    f"spatial shape {tuple(moving.shape[2:])} must be divisible by "
                    f"{2**DEPTH} with an even extent at field reduction {r}"
                )

    def predict(
        self, k: int, moving: torch.Tensor, fixed: torch.Tensor
    ) -> tuple[torch.Tensor, BandLimitedPatch | None, float | None]:
        """Field increment of cascade ``k`` at full resolution.

        Also returns the band-limited patch and the imaginary residue the
        decoder dropped, both ``None`` for variants without the codec.
        """
        variant = self.variant
        full = tuple(moving.shape[2:])
        x = torch.cat([moving, fixed], dim=1)
        if variant.band_limited_input:
            reduction = (variant.image_reduction,) * variant.dims
            if variant.uses_codec:
                x = encode_band_limited_image(x, reduction)
            else:
                x = resize_image(x, [n // r for n, r in zip(full, reduction)])

        out = self.nets[k](x)
        if not variant.uses_codec:
            if variant.kind == "unet":
                return out, None, None
            return resize_field(out, full), None, None

        if variant.embed_dft:
            patch = spatial_to_patch(out, full)
        else:
            d = variant.dims
            patch = BandLimitedPatch(
                torch.complex(out[:, :d], out[:, d:]),
                full,
                (variant.field_reduction,) * d,
            )
        if variant.zero_nyquist:
            patch = zero_nyquist(patch)
        decoded = decode_with_residue(patch)
        return decoded.field, patch, decoded.residue

    def forward(self, moving: torch.Tensor, fixed: torch.Tensor) -> RegistrationOutput:
        self.check_inputs(moving, fixed)
        increments: list[torch.Tensor] = []
        patches: list[BandLimitedPatch | None] = []
        residues: list[float | None] = []
        total: torch.Tensor | None = None
        current = moving
        for k in range(self.variant.cascades):
            delta, patch, residue = self.predict(k, current, fixed)
            increments.append(delta)
            patches.append(patch)
            residues.append(residue)
            total = delta if total is None else compose(total, delta)
            if k + 1 < self.variant.cascades:
                current = warp(moving, total)

        assert total is not None
        velocity = None
        displacement = total
        if self.variant.diffeomorphic:
            velocity = total
            displacement = exp_svf(total, self.variant.exp_steps)
        return RegistrationOutput(
            displacement=displacement,
            warped=warp(moving, displacement),
            velocity=velocity,
            increments=increments,
            patches=patches,
            residues=residues,
        )


def build(
    variant: NetVariant, dtype: torch.dtype = torch.float32, seed: int | None = 0
) -> RegistrationModel:
    """Instantiate ``variant`` with freshly initialized parameters."""
    plan = build_plan(variant)
    model = RegistrationModel(variant, plan, dtype)
    generator = None if seed is None else torch.Generator().manual_seed(seed)
    model.reset_parameters(generator)
    count = sum(p.numel() for p in model.parameters())
    logger.debug(f"Built {variant.label}: {count} parameters")
    return model


@dataclass(frozen=True)
class CostReport:
    """Analytic cost of one forward pass (all cascades)."""

    params: int
    mult_adds: int
    activations: int

    def to_dict(self) -> dict[str, int]:
        return {
            "params": self.params,
            "mult_adds": self.mult_adds,
            "activations": self.activations,
        }


def _fft_cost(spatial: Sequence[int], channels: int) -> int:
    n = math.prod(spatial)
    if n <= 1:
        return 0
    return round(5 * n * math.log2(n)) * channels


def count_costs(
    variant: NetVariant, C: int | None = None, spatial_shape: Sequence[int] = (96, 96)
) -> CostReport:
    """Parameters, mult-adds and stored activations of one forward pass.

    Parameters are convolution weights and biases. FFTs cost ``5 N log2 N``
    per channel; interpolation and PReLU are free.
    """
    if C is not None:
        if C < 1:
            raise VariantError(f"base channel count must be positive, got {C}")
        variant = variant.model_copy(update={"base_channels": C})
    full = tuple(spatial_shape)
    if len(full) != variant.dims:
        raise VariantError(f"shape {full} does not have {variant.dims} spatial axes")
    plan = build_plan(variant)

    def at(level: int) -> tuple[int, ...]:
        return tuple(n // 2**level for n in full)

    params = mult_adds = activations = 0
    for level, spec in plan.specs():
        shape_in = at(level)
        params += spec.params
        mult_adds += spec.mult_adds(shape_in)
        activations += spec.out_ch * math.prod(spec.output_shape(shape_in))

    if variant.uses_codec:
        if variant.band_limited_input:
            mult_adds += _fft_cost(full, 2) + _fft_cost(at(plan.input_level), 2)
        if variant.embed_dft:
            mult_adds += _fft_cost(at(plan.field_level), variant.dims)
        mult_adds += _fft_cost(full, variant.dims)

    k = variant.cascades
    return CostReport(params * k, mult_adds * k, activations * k)
