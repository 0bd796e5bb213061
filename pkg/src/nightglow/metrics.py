"""Full-reference image quality metrics."""

import math

import numpy as np
from scipy.ndimage import correlate1d

from nightglow.enhance import luma
from nightglow.errors import ParameterError
from nightglow.imgio import as_image

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _check_pair(a, b):
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise ParameterError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for unit dynamic range; ``inf`` when identical."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(x, g):
    r = len(g) // 2
    out = correlate1d(correlate1d(x, g, axis=0, mode="constant"), g, axis=1, mode="constant")
    return out[r:-r, r:-r]


def ssim_map(a, b) -> np.ndarray:
    a, b = _check_pair(a, b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise ParameterError(f"SSIM needs images at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    x, y = luma(a), luma(b)
    g = gaussian_window()
    mu_x, mu_y = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mu_x ** 2
    syy = _filter_valid(y * y, g) - mu_y ** 2
    sxy = _filter_valid(x * y, g) - mu_x * mu_y
    c1, c2 = K1 ** 2, K2 ** 2
    return ((2 * mu_x * mu_y + c1) * (2 * sxy + c2)) / ((mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2))


def ssim(a, b) -> float:
    """Mean SSIM on luma, 11x11 Gaussian window (sigma 1.5), valid region only."""
    return float(ssim_map(a, b).mean())


def compare(a, b) -> dict:
    return {"psnr": psnr(a, b), "ssim": ssim(a, b)}


def json_safe(value):
    """Replace infinities with the strings ``"inf"``/``"-inf"``, recursing into dicts and lists."""
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value
