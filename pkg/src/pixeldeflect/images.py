"""Image arrays, color conversion, file I/O, and distance metrics.

An image is a float64 numpy array of shape (height, width, channels) with
intensities in [0, 1] and channels either 1 (grayscale) or 3 (RGB or YCbCr).
Quantization to 8 bits happens only at PNG I/O; everything in between works
on the real-valued [0, 1] scale.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image as PILImage

__all__ = [
    "F32GRID_MAGIC",
    "ImageFormatError",
    "validate_image",
    "load_image",
    "save_image",
    "load_f32grid",
    "save_f32grid",
    "rgb_to_ycbcr",
    "ycbcr_to_rgb",
    "normalized_rmse",
]

F32GRID_MAGIC = b"F32G"

# Guard against corrupt headers asking for absurd allocations.
_MAX_ELEMENTS = 2**31


class ImageFormatError(ValueError):
    """Raised for unreadable, malformed, or unsupported image files."""


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Check shape (H, W, C) with C in {1, 3} and intensities in [0, 1]."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"{name} must have shape (H, W, 1) or (H, W, 3), got {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} has zero pixels")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} intensities must lie in [0, 1]")
    return arr


def load_image(path) -> np.ndarray:
    """Load a PNG (8-bit) or f32grid file as a float64 array in [0, 1].

    The format is sniffed from the file's magic bytes. For PNG, byte value v
    maps to v / 255 exactly; alpha channels are dropped; palette images are
    expanded to RGB. 16-bit PNGs are rejected.
    """
    path = str(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == F32GRID_MAGIC:
        return load_f32grid(path)
    return _load_png(path)


def _load_png(path: str) -> np.ndarray:
    try:
        pil = PILImage.open(path)
        pil.load()
    except Exception as exc:
        raise ImageFormatError(f"cannot read image file {path!r}: {exc}") from exc
    if pil.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
        raise ImageFormatError(f"unsupported bit depth for {path!r} (mode {pil.mode}); only 8-bit supported")
    if pil.mode == "RGBA":
        pil = pil.convert("RGB")
    elif pil.mode == "LA":
        pil = pil.convert("L")
    elif pil.mode not in ("RGB", "L"):
        pil = pil.convert("RGB")
    arr = np.asarray(pil, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.shape[0] * arr.shape[1] * arr.shape[2] > _MAX_ELEMENTS:
        raise ImageFormatError(f"image dimensions overflow sanity bound: {arr.shape}")
    return arr


def save_image(img: np.ndarray, path) -> None:
    """Write an image to PNG (8-bit, round-half-up) or f32grid by extension.

    Paths ending in .f32 or .f32grid use the raw float grid format, which is
    lossless; anything else is written as PNG, where intensity v maps to
    byte floor(255 * v + 0.5). A save/load PNG round trip is bit-identical
    for images whose intensities are exact multiples of 1/255.
    """
    arr = validate_image(img)
    path = str(path)
    if path.endswith((".f32", ".f32grid")):
        save_f32grid(arr, path)
        return
    quantized = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    if arr.shape[2] == 1:
        pil = PILImage.fromarray(quantized[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(quantized, mode="RGB")
    pil.save(path, format="PNG")


def load_f32grid(path) -> np.ndarray:
    """Read the raw float grid format (see `save_f32grid`)."""
    with open(str(path), "rb") as fh:
        header = fh.read(16)
        if len(header) < 16 or header[:4] != F32GRID_MAGIC:
            raise ImageFormatError(f"{path!r} is not an f32grid file")
        height, width, channels = struct.unpack("<III", header[4:16])
        count = height * width * channels
        if count == 0 or count > _MAX_ELEMENTS:
            raise ImageFormatError(f"f32grid dimensions invalid or overflow: {height}x{width}x{channels}")
        payload = fh.read(4 * count)
    if len(payload) != 4 * count:
        raise ImageFormatError(f"f32grid payload truncated in {path!r}")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return data.reshape(height, width, channels)


def save_f32grid(arr: np.ndarray, path) -> None:
    """Write a (H, W, C) or (H, W) float array as little-endian f32grid.

    Layout: magic "F32G", u32 height, u32 width, u32 channels, then
    height*width*channels little-endian float32 values, row-major with
    channels interleaved. Used for images, activation maps, and gradients.
    """
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"f32grid expects a 2-D or 3-D array, got shape {arr.shape}")
    height, width, channels = arr.shape
    with open(str(path), "wb") as fh:
        fh.write(F32GRID_MAGIC)
        fh.write(struct.pack("<III", height, width, channels))
        fh.write(arr.astype("<f4").tobytes(order="C"))


# Full-range (JPEG-convention) YCbCr on the [0, 1] scale. Chroma scale
# factors 1.772 and 1.402 place Cb/Cr in [0.25, 0.75] for in-gamut RGB, so
# the forward transform never actually clips valid input.
_CB_SCALE = 0.5 / 1.772
_CR_SCALE = 0.5 / 1.402


def _require_rgb(img: np.ndarray, op: str) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{op} requires a 3-channel image, got shape {arr.shape}")
    return arr


def rgb_to_ycbcr(img: np.ndarray) -> np.ndarray:
    """Convert RGB in [0, 1] to full-range YCbCr, clamped to [0, 1]."""
    arr = _require_rgb(img, "rgb_to_ycbcr")
    r, g, b = arr[:, :, 0], arr[:, :, 1], arr[:, :, 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 0.5 + (b - y) * _CB_SCALE
    cr = 0.5 + (r - y) * _CR_SCALE
    return np.clip(np.stack([y, cb, cr], axis=-1), 0.0, 1.0)


def ycbcr_to_rgb(img: np.ndarray) -> np.ndarray:
    """Invert `rgb_to_ycbcr` (exact before the final clamp to [0, 1])."""
    arr = _require_rgb(img, "ycbcr_to_rgb")
    y, cb, cr = arr[:, :, 0], arr[:, :, 1], arr[:, :, 2]
    r = y + (cr - 0.5) / _CR_SCALE
    b = y + (cb - 0.5) / _CB_SCALE
    g = (y - 0.299 * r - 0.114 * b) / 0.587
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def normalized_rmse(a: np.ndarray, b: np.ndarray) -> float:
    """Root-mean-square difference over all H*W*C elements.

    Intensities live in [0, 1], so the value is already on the normalized
    scale used for attack budgets.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))
