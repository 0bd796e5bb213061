"""APSF glow rendering: paired (clean, glow) image synthesis."""

import functools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.fft

from nightglow.apsf import ApsfParams, apsf_kernel_2d, apsf_weights
from nightglow.errors import NightglowError, ParameterError
from nightglow.imgio import as_image, atomic_write_bytes, clamp01, load_image, save_image
from nightglow.lightsource import MattingConfig, detect_light_sources

log = logging.getLogger(__name__)

ALPHA_COEFFS = (0.4196, -4.258, 11.35)
FFT_MIN_KERNEL = 15


@dataclass(frozen=True)
class GlowRecipe:
    apsf: ApsfParams = field(default_factory=ApsfParams)
    kernel_size: int = 127
    tau: float = 0.8
    alpha_coeffs: tuple = ALPHA_COEFFS
    alpha_noise_scale: float = 0.05
    clean_scale: float = 0.99
    noise_sigma: float = 0.01
    seed: int = 0
    matting: MattingConfig = field(default_factory=MattingConfig)
    conv_mode: str = "auto"

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ParameterError("kernel_size must be odd and >= 1")
        if not self.noise_sigma >= 0:
            raise ParameterError("noise_sigma must be >= 0")
        if not self.alpha_noise_scale >= 0:
            raise ParameterError("alpha_noise_scale must be >= 0")
        if len(self.alpha_coeffs) != 3:
            raise ParameterError("alpha_coeffs must hold three coefficients (a, b, c)")
        if self.conv_mode not in ("auto", "fft", "direct"):
            raise ParameterError("conv_mode must be one of auto, fft, direct")


@dataclass
class GlowResult:
    glow_image: np.ndarray  # I_g
    glow_layer: np.ndarray  # G
    matte: np.ndarray
    light_image: np.ndarray
    light_sz: float
    alpha: float
    epsilon: float


def _direct(plane, kernel):
    kh, kw = kernel.shape
    h, w = plane.shape
    rh, rw = kh // 2, kw // 2
    padded = np.pad(plane, ((rh, rh), (rw, rw)))
    out = np.zeros_like(plane)
    for a in range(kh):
        for b in range(kw):
            k = kernel[a, b]
            if k != 0.0:
                out += k * padded[2 * rh - a:2 * rh - a + h, 2 * rw - b:2 * rw - b + w]
    return out


def _fft(img, kernel):
    h, w = img.shape[:2]
    kh, kw = kernel.shape
    shape = (scipy.fft.next_fast_len(h + kh - 1, True), scipy.fft.next_fast_len(w + kw - 1, True))
    spec_k = scipy.fft.rfft2(kernel, shape)
    spec_i = scipy.fft.rfft2(img, shape, axes=(0, 1))
    full = scipy.fft.irfft2(spec_i * spec_k[:, :, None], shape, axes=(0, 1))
    rh, rw = kh // 2, kw // 2
    return full[rh:rh + h, rw:rw + w]


def convolve2d(img, kernel, mode: str = "auto") -> np.ndarray:
    """Per-channel 'same'-size linear convolution with zero padding."""
    squeeze = np.ndim(img) == 2
    img = as_image(img)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ParameterError(f"kernel must be 2-D with odd sides, got {kernel.shape}")
    if mode == "auto":
        mode = "fft" if max(kernel.shape) >= FFT_MIN_KERNEL else "direct"
    if mode == "direct":
        if kernel.shape[0] > img.shape[0] or kernel.shape[1] > img.shape[1]:
            raise ParameterError(f"direct mode needs a kernel no larger than the image {img.shape[:2]}")
        out = np.stack([_direct(img[:, :, c], kernel) for c in range(img.shape[2])], axis=2)
    elif mode == "fft":
        out = _fft(img, kernel)
    else:
        raise ParameterError(f"unknown convolution mode {mode!r}")
    return out[:, :, 0] if squeeze else out


def alpha_from_lightsz(light_sz: float, epsilon: float = 0.0, coeffs=ALPHA_COEFFS,
                       noise_scale: float = 0.05) -> float:
    """Glow gain from light coverage (percent), floored at zero."""
    if light_sz < 0:
        raise ParameterError("light_sz must be >= 0")
    a, b, c = coeffs
    alpha = a * light_sz ** 2 + b * light_sz + c + noise_scale * epsilon
    if alpha < 0:
        log.warning("glow gain %.4f negative at light_sz=%.3f; floored to 0", alpha, light_sz)
        return 0.0
    return float(alpha)


@functools.lru_cache(maxsize=32)
def glow_kernel(apsf: ApsfParams, size: int) -> np.ndarray:
    kernel = apsf_kernel_2d(apsf_weights(apsf), size)
    kernel.setflags(write=False)
    return kernel


def render_glow(clean, recipe: GlowRecipe = None, rng=None, kernel=None) -> GlowResult:
    """Render nighttime glow on a clean image.

    ``rng`` defaults to ``numpy.random.default_rng(recipe.seed)``; the gain
    perturbation is drawn first, then the per-sample additive noise.
    """
    recipe = recipe or GlowRecipe()
    clean = as_image(clean)
    if rng is None:
        rng = np.random.default_rng(recipe.seed)
    if kernel is None:
        kernel = glow_kernel(recipe.apsf, recipe.kernel_size)

    lights = detect_light_sources(clean, recipe.tau, recipe.matting)
    if lights.light_sz > 0:
        layer = convolve2d(lights.light_image, kernel, recipe.conv_mode)
    else:
        layer = np.zeros_like(clean)

    epsilon = float(rng.standard_normal())
    alpha = alpha_from_lightsz(lights.light_sz, epsilon, recipe.alpha_coeffs, recipe.alpha_noise_scale)
    out = recipe.clean_scale * clean + alpha * layer
    if recipe.noise_sigma > 0:
        out = out + rng.normal(0.0, recipe.noise_sigma, size=clean.shape)
    return GlowResult(
        glow_image=clamp01(out),
        glow_layer=layer,
        matte=lights.matte,
        light_image=lights.light_image,
        light_sz=lights.light_sz,
        alpha=alpha,
        epsilon=epsilon,
    )


def read_manifest(path) -> list:
    """Parse a JSON-lines manifest; relative input paths resolve against its directory."""
    path = Path(path)
    records = []
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParameterError(f"cannot read manifest {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(rec, dict) or "in" not in rec:
            raise ParameterError(f"{path}:{lineno}: record needs an \"in\" path")
        rec = dict(rec)
        rec["path"] = str(path.parent / rec["in"])
        records.append(rec)
    return records


def output_paths(out_dir, index: int, src) -> dict:
    stem = f"{index:04d}_{Path(src).stem}"
    out_dir = Path(out_dir)
    return {
        "glow": out_dir / f"{stem}_glow.png",
        "layer": out_dir / f"{stem}_layer.png",
        "matte": out_dir / f"{stem}_matte.png",
    }


def record_rng(index: int, record: dict, master_seed: int):
    if record.get("seed") is not None:
        return np.random.default_rng(int(record["seed"]))
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), index]))


def _render_record(index, record, recipe, out_dir):
    start = time.perf_counter()
    row = {"in": record["in"], "light_sz": None, "alpha": None, "ms": None, "status": "ok"}
    try:
        apsf = recipe.apsf
        if record.get("T") is not None:
            apsf = replace(apsf, T=float(record["T"]))
        if record.get("q") is not None:
            apsf = replace(apsf, q=float(record["q"]))
        rec_recipe = replace(recipe, apsf=apsf)
        clean = load_image(record.get("path", record["in"]))
        result = render_glow(clean, rec_recipe, rng=record_rng(index, record, recipe.seed))
        paths = output_paths(out_dir, index, record["in"])
        save_image(result.glow_image, paths["glow"])
        save_image(clamp01(result.glow_layer), paths["layer"])
        save_image(result.matte, paths["matte"])
        row["light_sz"] = result.light_sz
        row["alpha"] = result.alpha
    except (NightglowError, ValueError, TypeError) as exc:
        log.error("record %d (%s) failed: %s", index, record.get("in"), exc)
        row["status"] = "error"
        row["error"] = str(exc)
    row["ms"] = round((time.perf_counter() - start) * 1000.0, 3)
    return row


def batch_render(records, recipe: GlowRecipe = None, out_dir=".", jobs: int = 1) -> list:
    """Render every manifest record; failures are reported, not raised.

    The report preserves manifest order. Randomness per record comes from the
    record's own seed, else from ``(recipe.seed, index)``, so scheduling never
    changes outputs.
    """
    recipe = recipe or GlowRecipe()
    records = list(records)
    if jobs < 1:
        raise ParameterError("jobs must be >= 1")
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    work = [(i, rec, recipe, out_dir) for i, rec in enumerate(records)]
    if jobs == 1 or len(work) <= 1:
        return [_render_record(*w) for w in work]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda w: _render_record(*w), work))


def write_report(rows, path) -> None:
    payload = "".join(json.dumps(row) + "\n" for row in rows)
    atomic_write_bytes(path, payload.encode("utf-8"))
