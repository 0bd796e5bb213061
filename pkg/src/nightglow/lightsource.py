"""Light-source detection: intensity threshold refined by closed-form matting.

The matting Laplacian is never materialized. Its action on a vector is
assembled from box filters over the local windows (means, color covariance,
per-window affine coefficients), so one application costs a handful of
passes over the image.
"""

import logging
from dataclasses import dataclass

import cv2
import numpy as np
from scipy.ndimage import uniform_filter

from nightglow.errors import ConvergenceError, MatteOvershootError, ParameterError
from nightglow.imgio import as_image, as_matte, max_channel

log = logging.getLogger(__name__)

HALF_RES_PIXELS = 1_000_000
OVERSHOOT_BAND = (-0.05, 1.05)


@dataclass(frozen=True)
class MattingConfig:
    window: int = 3
    eps: float = 1e-7
    lam: float = 100.0
    cg_tol: float = 1e-6
    cg_max_iter: int = 2000
    # None: solve at half resolution only above HALF_RES_PIXELS
    half_resolution: bool = None

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ParameterError("matting window must be odd and >= 3")
        if not self.eps > 0:
            raise ParameterError("matting eps must be > 0")
        if not self.lam > 0:
            raise ParameterError("matting lambda must be > 0")
        if not 0 < self.cg_tol < 1:
            raise ParameterError("cg_tol must be in (0, 1)")
        if self.cg_max_iter < 1:
            raise ParameterError("cg_max_iter must be >= 1")


@dataclass
class LightSourceResult:
    matte: np.ndarray
    light_image: np.ndarray
    light_sz: float
    mask: np.ndarray = None


@dataclass
class SolveInfo:
    iterations: int
    residual: float  # relative: ||b - A x|| / ||b||


def threshold_mask(img, tau: float = 0.8) -> np.ndarray:
    """1 where the brightest channel exceeds ``tau``, else 0."""
    return (max_channel(img) > tau).astype(np.float64)


class MattingLaplacian:
    """Matrix-free closed-form matting Laplacian for one image.

    Only windows lying fully inside the image contribute, as in the
    classical sparse assembly.
    """

    def __init__(self, img, window: int = 3, eps: float = 1e-7):
        img = as_image(img)
        h, w, c = img.shape
        if h < window or w < window:
            raise ParameterError(f"image {h}x{w} smaller than matting window {window}")
        self.img = img
        self.shape = (h, w)
        self.window = window
        self.n = window * window
        r = window // 2
        valid = np.zeros((h, w))
        valid[r:h - r, r:w - r] = 1.0
        self.valid = valid
        self.count = self._scatter(valid)

        mu = self._mean(img)
        outer = img[:, :, :, None] * img[:, :, None, :]
        cov = self._mean(outer) - mu[:, :, :, None] * mu[:, :, None, :]
        cov += (eps / self.n) * np.eye(c)
        cov[valid == 0] = np.eye(c)
        inv = np.linalg.inv(cov)
        inv[valid == 0] = 0.0
        self.mu = mu
        self.inv = inv

        # diagonal, for the Jacobi preconditioner
        s_sum = self._scatter(inv)
        smu = np.einsum("hwij,hwj->hwi", inv, mu)
        smu_sum = self._scatter(smu)
        musmu_sum = self._scatter(np.einsum("hwi,hwi->hw", mu, smu))
        quad = (
            np.einsum("hwi,hwij,hwj->hw", img, s_sum, img)
            - 2.0 * np.einsum("hwi,hwi->hw", img, smu_sum)
            + musmu_sum
        )
        self.diagonal = np.maximum(self.count * (1.0 - 1.0 / self.n) - quad / self.n, 0.0)

    def _mean(self, x):
        size = (self.window, self.window) + (1,) * (x.ndim - 2)
        return uniform_filter(x, size=size, mode="nearest")

    def _scatter(self, x):
        # sum over the valid windows that contain each pixel
        size = (self.window, self.window) + (1,) * (x.ndim - 2)
        valid = self.valid.reshape(self.valid.shape + (1,) * (x.ndim - 2))
        return uniform_filter(x * valid, size=size, mode="constant") * self.n

    def apply(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64).reshape(self.shape)
        p_mean = self._mean(p)
        ip_mean = self._mean(self.img * p[:, :, None])
        cross = ip_mean - self.mu * p_mean[:, :, None]
        a = np.einsum("hwij,hwj->hwi", self.inv, cross)
        b = p_mean - np.einsum("hwi,hwi->hw", self.mu, a)
        a_sum = self._scatter(a)
        b_sum = self._scatter(b)
        return self.count * p - b_sum - np.einsum("hwi,hwi->hw", self.img, a_sum)


def _pcg(apply_a, b, diag, x0, tol, max_iter):
    b_norm = np.linalg.norm(b)
    if b_norm == 0:
        return np.zeros_like(b), SolveInfo(0, 0.0)
    x = x0.copy()
    r = b - apply_a(x)
    res = np.linalg.norm(r) / b_norm
    if res <= tol:
        return x, SolveInfo(0, res)
    z = r / diag
    p = z.copy()
    rz = np.vdot(r, z)
    for it in range(1, max_iter + 1):
        ap = apply_a(p)
        step = rz / np.vdot(p, ap)
        x += step * p
        r -= step * ap
        res = np.linalg.norm(r) / b_norm
        if res <= tol:
            # recompute the true residual to guard against drift
            res = np.linalg.norm(b - apply_a(x)) / b_norm
            if res <= tol:
                return x, SolveInfo(it, res)
            r = b - apply_a(x)
        z = r / diag
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"matting CG did not converge in {max_iter} iterations (residual {res:.3e})",
        residual=res,
        iterations=max_iter,
    )


def solve_matting(img, mask, cfg: MattingConfig = None):
    """Solve ``(L + lam*I) alpha = lam * mask`` at the given resolution.

    Returns the unclamped solution and a :class:`SolveInfo`.
    """
    cfg = cfg or MattingConfig()
    img = as_image(img)
    mask = as_matte(mask)
    if mask.shape != img.shape[:2]:
        raise ParameterError(f"mask shape {mask.shape} != image shape {img.shape[:2]}")
    lap = MattingLaplacian(img, cfg.window, cfg.eps)
    rhs = cfg.lam * mask
    diag = lap.diagonal + cfg.lam
    alpha, info = _pcg(
        lambda v: lap.apply(v) + cfg.lam * v, rhs, diag, mask.copy(), cfg.cg_tol, cfg.cg_max_iter
    )
    return alpha, info


def _downsample(x):
    h, w = x.shape[:2]
    return cv2.resize(x, ((w + 1) // 2, (h + 1) // 2), interpolation=cv2.INTER_AREA)


def matting_refine(img, mask, cfg: MattingConfig = None) -> np.ndarray:
    """Refine a binary light mask into a soft matte in [0, 1]."""
    cfg = cfg or MattingConfig()
    img = as_image(img)
    mask = as_matte(mask)
    h, w = mask.shape
    half = cfg.half_resolution
    if half is None:
        half = h * w > HALF_RES_PIXELS
    if half:
        small_img = _downsample(img)
        if small_img.ndim == 2:
            small_img = small_img[:, :, None]
        alpha, info = solve_matting(small_img, _downsample(mask), cfg)
    else:
        alpha, info = solve_matting(img, mask, cfg)
    log.debug("matting converged in %d iterations, residual %.2e", info.iterations, info.residual)

    lo, hi = alpha.min(), alpha.max()
    if lo < OVERSHOOT_BAND[0] or hi > OVERSHOOT_BAND[1]:
        raise MatteOvershootError(
            f"matte range [{lo:.3f}, {hi:.3f}] exceeds {OVERSHOOT_BAND}; check matting config",
            residual=info.residual,
            iterations=info.iterations,
        )
    if half:
        alpha = cv2.resize(alpha, (w, h), interpolation=cv2.INTER_LINEAR)
    return np.clip(alpha, 0.0, 1.0)


def detect_light_sources(img, tau: float = 0.8, cfg: MattingConfig = None) -> LightSourceResult:
    img = as_image(img)
    mask = threshold_mask(img, tau)
    if not mask.any():
        matte = np.zeros_like(mask)
    else:
        matte = matting_refine(img, mask, cfg)
    light = img * matte[:, :, None]
    light_sz = float(matte.sum() / matte.size * 100.0)
    return LightSourceResult(matte=matte, light_image=light, light_sz=light_sz, mask=mask)
