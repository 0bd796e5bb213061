"""Deterministic edge and texture operators and the consistency metrics built on them.

* gradient (pixel-difference) convolution: ``v'_i = sum_j w[p_i - p_j] (v_j - v_i)``
* adaptive (bilateral) convolution: ``v'_i = sum_j K(f_i, f_j) w[p_i - p_j] v_j``,
  normalized by the kernel mass
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from nightglow.errors import ParameterError
from nightglow.imgio import as_image, as_matte

CROSS_WEIGHTS = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
DIAGONAL_WEIGHTS = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 1.0]])


@dataclass(frozen=True)
class ConvSpec:
    k: int = 3
    weights: np.ndarray = None  # k x k, indexed by offset p_i - p_j; default all ones
    variant: str = "gradient"

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise ParameterError("window side k must be odd")
        if self.variant not in ("vanilla", "gradient", "adaptive"):
            raise ParameterError("variant must be vanilla, gradient or adaptive")
        w = np.ones((self.k, self.k)) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (self.k, self.k) or not np.all(np.isfinite(w)):
            raise ParameterError(f"weights must be a finite {self.k}x{self.k} array")
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class BilateralParams:
    alpha1: float = 0.02
    alpha2: float = None  # default (k/3)**2 with k = 2*radius + 1
    radius: int = 5

    def __post_init__(self):
        if self.radius < 1:
            raise ParameterError("bilateral radius must be >= 1")
        if self.alpha2 is None:
            object.__setattr__(self, "alpha2", ((2 * self.radius + 1) / 3.0) ** 2)
        if not self.alpha1 > 0:
            raise ParameterError("alpha1 must be > 0")
        if not self.alpha2 > 0:
            raise ParameterError("alpha2 must be > 0")


def _offsets(radius):
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            yield dy, dx


def _neighbor(padded, radius, dy, dx, h, w):
    # value at p_i + (dy, dx) for every pixel i
    return padded[radius + dy:radius + dy + h, radius + dx:radius + dx + w]


def window_conv(img, spec: ConvSpec) -> np.ndarray:
    """Vanilla or gradient window convolution with replicate padding."""
    img = as_image(img)
    h, w = img.shape[:2]
    r = spec.k // 2
    padded = np.pad(img, ((r, r), (r, r), (0, 0)), mode="edge")
    out = np.zeros_like(img)
    for dy, dx in _offsets(r):
        # neighbor j = i + (dy, dx), so p_i - p_j = (-dy, -dx)
        wt = spec.weights[r - dy, r - dx]
        if wt == 0.0:
            continue
        v_j = _neighbor(padded, r, dy, dx, h, w)
        if spec.variant == "gradient":
            out += wt * (v_j - img)
        else:
            out += wt * v_j
    return out


def gradient_conv(img, spec: ConvSpec = None) -> np.ndarray:
    spec = spec or ConvSpec()
    if spec.variant != "gradient":
        raise ParameterError("gradient_conv needs a ConvSpec with variant='gradient'")
    return window_conv(img, spec)


def edge_map(img) -> np.ndarray:
    """Edge strength in [0, 1] from cross and diagonal pixel differences."""
    img = as_image(img)
    cross = gradient_conv(img, ConvSpec(3, CROSS_WEIGHTS))
    diag = gradient_conv(img, ConvSpec(3, DIAGONAL_WEIGHTS))
    mag = np.sqrt(cross ** 2 + diag ** 2).mean(axis=2)
    lo, hi = mag.min(), mag.max()
    if hi - lo <= 1e-12:
        return np.zeros_like(mag)
    return (mag - lo) / (hi - lo)


def bilateral_filter(img, params: BilateralParams = None) -> np.ndarray:
    """Edge-preserving average with color-feature and spatial Gaussian weights."""
    params = params or BilateralParams()
    img = as_image(img)
    h, w = img.shape[:2]
    r = params.radius
    padded = np.pad(img, ((r, r), (r, r), (0, 0)), mode="edge")
    num = np.zeros_like(img)
    den = np.zeros((h, w, 1))
    for dy, dx in _offsets(r):
        v_j = _neighbor(padded, r, dy, dx, h, w)
        dist2 = ((v_j - img) ** 2).sum(axis=2, keepdims=True)
        wt = np.exp(-dist2 / (2.0 * params.alpha1)) * np.exp(-(dy * dy + dx * dx) / (2.0 * params.alpha2))
        num += wt * v_j
        den += wt
    return num / den


class TextureResult(NamedTuple):
    visual: np.ndarray  # residual + 0.5, clamped
    residual: np.ndarray


def texture_map(img, params: BilateralParams = None) -> TextureResult:
    img = as_image(img)
    residual = img - bilateral_filter(img, params)
    return TextureResult(np.clip(residual + 0.5, 0.0, 1.0), residual)


def consistency_metrics(a, b, matte, light, params: BilateralParams = None) -> dict:
    """Mean-L1 light-source, gradient and bilateral consistency between ``a`` and ``b``.

    ``a`` plays the output image, ``b`` the input; ``light`` is the light-source
    image extracted from the input with ``matte``.
    """
    a, b, light = as_image(a), as_image(b), as_image(light)
    matte = as_matte(matte)
    if a.shape != b.shape or a.shape != light.shape or a.shape[:2] != matte.shape:
        raise ParameterError(
            f"shape mismatch: a {a.shape}, b {b.shape}, light {light.shape}, matte {matte.shape}"
        )
    return {
        "L_ls": float(np.mean(np.abs(a * matte[:, :, None] - light))),
        "L_g": float(np.mean(np.abs(edge_map(a) - edge_map(b)))),
        "L_k": float(np.mean(np.abs(bilateral_filter(a, params) - bilateral_filter(b, params)))),
    }
