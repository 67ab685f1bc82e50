"""Augmentation catalog: resampling plus the comparison transforms."""

from senres.augment.resample import (
    ResampleParams,
    downsample,
    lagrange_eval,
    natural_spline_eval,
    resample,
    upsample_linear,
    upsample_nonlinear,
)
from senres.augment.spec import AugmentSpec, apply, apply_batch, parse
from senres.augment.transforms import invert, magnify, noise, reverse, rotate, rotation_matrix, scale
from senres.augment.window import Window, window_rng

__all__ = [
    "AugmentSpec", "ResampleParams", "Window", "apply", "apply_batch", "downsample", "invert",
    "lagrange_eval", "magnify", "natural_spline_eval", "noise", "parse", "resample", "reverse",
    "rotate", "rotation_matrix", "scale", "upsample_linear", "upsample_nonlinear", "window_rng",
]
