"""Image buffers, codecs and elementary pixel utilities.

Images are float64 numpy arrays of shape (H, W, C) with C in {1, 3} and
samples in [0, 1]. Mattes are float64 arrays of shape (H, W).
"""

import os
import tempfile
from pathlib import Path

import cv2
import numpy as np

from nightglow.errors import ImageFormatError, ImageIOError, NumericError, ParameterError

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_JPEG_MAGIC = b"\xff\xd8\xff"


def as_image(arr) -> np.ndarray:
    """Coerce an array to the (H, W, C) float64 layout, validating shape."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ParameterError(f"expected an HxWx1 or HxWx3 image, got shape {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ParameterError("image has zero area")
    return img


def as_matte(arr) -> np.ndarray:
    matte = np.asarray(arr, dtype=np.float64)
    if matte.ndim == 3 and matte.shape[2] == 1:
        matte = matte[:, :, 0]
    if matte.ndim != 2:
        raise ParameterError(f"expected an HxW matte, got shape {matte.shape}")
    return matte


def load_image(path) -> np.ndarray:
    """Read an 8- or 16-bit PNG/JPEG into [0, 1], RGB order, alpha dropped."""
    path = Path(path)
    try:
        head = path.read_bytes()[:8]
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    if not (head.startswith(_PNG_MAGIC) or head.startswith(_JPEG_MAGIC)):
        raise ImageFormatError(f"{path}: not a PNG or JPEG file")

    raw = cv2.imdecode(np.fromfile(str(path), dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageFormatError(f"{path}: corrupt or unsupported image data")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageFormatError(f"{path}: unsupported sample type {raw.dtype}")

    if raw.ndim == 2:
        img = raw[:, :, None]
    elif raw.shape[2] == 1:
        img = raw
    elif raw.shape[2] == 2:
        # gray + alpha
        img = raw[:, :, :1]
    else:
        img = raw[:, :, 2::-1]  # BGR(A) -> RGB
    return img.astype(np.float64) / scale


def to_bytes(img) -> np.ndarray:
    """Quantize to uint8 with round-half-up."""
    img = np.asarray(img, dtype=np.float64)
    if np.isnan(img).any():
        raise NumericError("cannot quantize NaN samples")
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def encode_png(img) -> bytes:
    data = to_bytes(img)
    if data.ndim == 3 and data.shape[2] == 3:
        data = data[:, :, ::-1]
    elif data.ndim == 3:
        data = data[:, :, 0]
    ok, buf = cv2.imencode(".png", np.ascontiguousarray(data))
    if not ok:
        raise ImageFormatError("PNG encoding failed")
    return buf.tobytes()


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write via a sibling temp file and rename, so readers never see a torn file."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def save_image(img, path) -> None:
    """Write an image or matte as an 8-bit PNG, ``round(sample * 255)`` half-up."""
    atomic_write_bytes(path, encode_png(img))


def max_channel(img) -> np.ndarray:
    img = as_image(img)
    return img.max(axis=2)


def clamp01(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if np.isnan(arr).any():
        raise NumericError("NaN sample encountered while clamping")
    return np.clip(arr, 0.0, 1.0)
