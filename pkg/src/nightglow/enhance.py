"""Attention-guided gamma brightening of dehazed night images."""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from nightglow.errors import ParameterError
from nightglow.imgio import as_image, as_matte, max_channel

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class EnhanceParams:
    gamma: float = 0.3
    smooth_radius: int = 16
    guided_eps: float = 1e-3

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ParameterError("gamma must be in (0, 1]")
        if self.smooth_radius < 1:
            raise ParameterError("smooth_radius must be >= 1")
        if not self.guided_eps > 0:
            raise ParameterError("guided_eps must be > 0")


def luma(img) -> np.ndarray:
    img = as_image(img)
    if img.shape[2] == 1:
        return img[:, :, 0]
    return img @ LUMA


def _box(x, radius):
    return uniform_filter(x, size=2 * radius + 1, mode="reflect")


def guided_filter(guide, src, radius: int, eps: float) -> np.ndarray:
    """Gray-guidance guided filter (local linear model ``q = a * I + b``)."""
    mean_i = _box(guide, radius)
    mean_p = _box(src, radius)
    cov_ip = _box(guide * src, radius) - mean_i * mean_p
    var_i = _box(guide * guide, radius) - mean_i * mean_i
    a = cov_ip / (var_i + eps)
    b = mean_p - a * mean_i
    return _box(a, radius) * guide + _box(b, radius)


def attention_map(haze, params: EnhanceParams = None) -> np.ndarray:
    """Soft map, high on dark structured regions and low on bright uniform haze or sky.

    The coarse map is one minus the box-smoothed brightest channel; it is then
    refined with a guided filter steered by the haze image's luma.
    """
    params = params or EnhanceParams()
    haze = as_image(haze)
    coarse = 1.0 - _box(max_channel(haze), params.smooth_radius)
    refined = guided_filter(luma(haze), coarse, params.smooth_radius, params.guided_eps)
    return np.clip(refined, 0.0, 1.0)


def gamma_enhance(dehazed, attention, params: EnhanceParams = None) -> np.ndarray:
    """Blend ``(1 - A) * O + A * O**gamma`` per pixel and channel."""
    params = params or EnhanceParams()
    img = as_image(dehazed)
    att = as_matte(attention)
    if att.shape != img.shape[:2]:
        raise ParameterError(f"attention shape {att.shape} != image shape {img.shape[:2]}")
    if img.min() < 0 or img.max() > 1:
        raise ParameterError("dehazed image must lie in [0, 1]")
    if att.min() < 0 or att.max() > 1:
        raise ParameterError("attention must lie in [0, 1]")
    # written as O + A * (O**gamma - O): the increment is >= 0, so O_e >= O holds exactly
    return img + att[:, :, None] * (img ** params.gamma - img)
