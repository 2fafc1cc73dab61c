"""Seeded synthetic image classes for desk-scale experiments.

Each class is a fixed spatial pattern (ramps, blobs, stripes, half-fields)
with a class-specific color emphasis, rendered around mid-gray so attack
perturbations rarely hit the [0, 1] clamp. Per-image randomness is pixel
noise plus a small brightness jitter: enough to keep a linear classifier
honest without making the task hard.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .images import load_image, save_image

__all__ = [
    "MAX_CLASSES",
    "class_template",
    "make_synthetic_dataset",
    "write_manifest",
    "load_manifest",
]

MAX_CLASSES = 10

# Pattern contrast and default per-image corruption. Tuned so that a toy
# linear-softmax classifier lands in the low-to-mid 90s on held-out images.
_AMPLITUDE = 0.22
DEFAULT_NOISE = 0.12
DEFAULT_JITTER = 0.05

# Per-class channel emphasis, cycled for classes beyond the table.
_TINTS = np.array(
    [
        [1.00, 0.55, 0.55],
        [0.55, 1.00, 0.55],
        [0.55, 0.55, 1.00],
        [1.00, 1.00, 0.50],
        [0.50, 1.00, 1.00],
        [1.00, 0.50, 1.00],
        [1.00, 0.75, 0.50],
        [0.50, 0.75, 1.00],
        [0.90, 0.90, 0.90],
        [0.60, 1.00, 0.75],
    ]
)


def _pattern(class_index: int, size: int) -> np.ndarray:
    """Spatial pattern in [-1, 1] for one class."""
    t = np.linspace(-1.0, 1.0, size)
    xx, yy = np.meshgrid(t, t)
    k = class_index % MAX_CLASSES
    if k == 0:
        return xx
    if k == 1:
        return yy
    if k == 2:
        return (xx + yy) / 2.0
    if k == 3:
        return 1.0 - 2.0 * np.exp(-2.5 * (xx**2 + yy**2))
    if k == 4:
        return 2.0 * np.exp(-2.5 * (xx**2 + yy**2)) - 1.0
    if k == 5:
        return np.sin(3.0 * np.pi * yy)
    if k == 6:
        return np.sin(3.0 * np.pi * xx)
    if k == 7:
        return np.sin(2.0 * np.pi * xx) * np.sin(2.0 * np.pi * yy)
    if k == 8:
        return np.tanh(-4.0 * xx)  # bright left
    return np.tanh(4.0 * xx)  # bright right


def class_template(class_index: int, size: int = 32) -> np.ndarray:
    """Noise-free class prototype: mid-gray plus the tinted pattern."""
    pattern = _pattern(class_index, size)
    tint = _TINTS[class_index % MAX_CLASSES]
    return np.clip(0.5 + _AMPLITUDE * pattern[:, :, None] * tint[None, None, :], 0.0, 1.0)


def make_synthetic_dataset(
    n_images: int,
    n_classes: int = 8,
    size: int = 32,
    noise: float = DEFAULT_NOISE,
    brightness_jitter: float = DEFAULT_JITTER,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generate (images, labels): (N, size, size, 3) in [0, 1] and (N,) ints.

    Labels are balanced (round-robin, then shuffled) and everything is
    drawn from one PCG64 stream, so a given seed always yields the same
    dataset.
    """
    if not 2 <= n_classes <= MAX_CLASSES:
        raise ValueError(f"n_classes must be in [2, {MAX_CLASSES}]")
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    labels = rng.permutation(np.arange(n_images) % n_classes).astype(np.int64)
    templates = np.stack([class_template(c, size) for c in range(n_classes)])
    images = templates[labels].copy()
    jitter = rng.uniform(-brightness_jitter, brightness_jitter, size=n_images)
    images += jitter[:, None, None, None]
    images += rng.normal(0.0, noise, size=images.shape)
    return np.clip(images, 0.0, 1.0), labels


def write_manifest(
    out_dir,
    images: np.ndarray,
    labels: np.ndarray,
    image_format: str = "png",
) -> str:
    """Save images plus a manifest.csv of (path, label); returns its path.

    Image paths in the manifest are relative to the manifest's directory.
    """
    if image_format not in ("png", "f32"):
        raise ValueError("image_format must be 'png' or 'f32'")
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.csv")
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label"])
        for i, (img, label) in enumerate(zip(images, labels)):
            name = f"img_{i:05d}.{image_format}"
            save_image(img, os.path.join(out_dir, name))
            writer.writerow([name, int(label)])
    return manifest_path


def load_manifest(manifest_path) -> tuple[np.ndarray, np.ndarray]:
    """Load a (path, label) manifest into an image stack and label vector.

    All images must share one shape. Relative paths resolve against the
    manifest's directory.
    """
    manifest_path = str(manifest_path)
    base = os.path.dirname(os.path.abspath(manifest_path))
    images: list[np.ndarray] = []
    labels: list[int] = []
    with open(manifest_path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "path":
                continue
            rel, label = row[0].strip(), int(row[1])
            path = rel if os.path.isabs(rel) else os.path.join(base, rel)
            images.append(load_image(path))
            labels.append(label)
    if not images:
        raise ValueError(f"manifest {manifest_path!r} lists no images")
    shapes = {img.shape for img in images}
    if len(shapes) > 1:
        raise ValueError(f"manifest images disagree on shape: {sorted(shapes)}")
    return np.stack(images), np.asarray(labels, dtype=np.int64)
