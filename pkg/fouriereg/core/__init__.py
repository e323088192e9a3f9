"""Core functionality for fouriereg."""

from .deform import compose, exp_svf, jacobian_det, neg_jac_fraction, warp
from .fourier import BandLimitedPatch, decode_field, encode_band_limited_image
from .model import RegistrationModel, build, count_costs

__all__ = [
    "BandLimitedPatch",
    "RegistrationModel",
    "build",
    "compose",
    "count_costs",
    "decode_field",
    "encode_band_limited_image",
    "exp_svf",
    "jacobian_det",
    "neg_jac_fraction",
    "warp",
]
