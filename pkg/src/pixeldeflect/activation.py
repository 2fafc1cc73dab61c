"""Class activation maps and their rank-robust combination.

A class activation map is a weighted sum of feature channels; the robust
map averages the maps of the top-k predicted classes with exponentially
decaying weights 1/2, 1/4, ... so that a wrong-but-plausible top-1 class
cannot dominate. Negative values are clamped to zero and the result is
normalized by its maximum into [0, 1].
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "cam_from_features",
    "robust_map",
    "resize_map",
    "top_k_classes",
]

DEFAULT_TOP_K = 5


def cam_from_features(features: np.ndarray, weights: np.ndarray, class_index: int) -> np.ndarray:
    """Weighted channel sum: map(x, y) = sum_k w[c, k] * features[k, x, y].

    `features` has shape (k, H, W); `weights` has one length-k row per
    class. The result is raw: unnormalized and possibly negative.
    """
    feats = np.asarray(features, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if feats.ndim != 3:
        raise ValueError(f"features must have shape (channels, H, W), got {feats.shape}")
    if w.ndim != 2:
        raise ValueError(f"weights must have shape (classes, channels), got {w.shape}")
    if not 0 <= class_index < w.shape[0]:
        raise ValueError(f"class index {class_index} out of range for {w.shape[0]} classes")
    if w.shape[1] != feats.shape[0]:
        raise ValueError(
            f"weight length {w.shape[1]} does not match {feats.shape[0]} feature channels"
        )
    return np.tensordot(w[class_index], feats, axes=([0], [0]))


def robust_map(maps: list[np.ndarray]) -> np.ndarray:
    """Combine per-class maps, ordered best class first, into one map.

    Map i (1-based) is weighted by 1/2^i; the sum is clamped at zero and
    divided by its maximum so values land in [0, 1]. An all-zero (or all
    non-positive) combination is returned as zeros, unnormalized.
    """
    if not maps:
        raise ValueError("robust_map requires at least one activation map")
    first = np.asarray(maps[0], dtype=np.float64)
    combined = np.zeros_like(first)
    for i, m in enumerate(maps, start=1):
        arr = np.asarray(m, dtype=np.float64)
        if arr.shape != first.shape:
            raise ValueError(f"map {i} shape {arr.shape} differs from {first.shape}")
        combined += arr / (2.0**i)
    combined = np.maximum(combined, 0.0)
    peak = combined.max()
    if peak > 0.0:
        combined /= peak
    return combined


def resize_map(activation_map: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear, corner-aligned resampling of a 2-D map.

    Output corners sample input corners exactly; a size-1 target axis
    samples coordinate 0. Values are clamped to [0, 1] when the input was
    in range (interpolation cannot overshoot, so this only guards rounding).
    """
    arr = np.asarray(activation_map, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {arr.shape}")
    if height < 1 or width < 1:
        raise ValueError("target dimensions must be >= 1")
    src_h, src_w = arr.shape
    if (src_h, src_w) == (height, width):
        return arr.copy()

    def _coords(n_src: int, n_dst: int) -> np.ndarray:
        if n_dst == 1 or n_src == 1:
            return np.zeros(n_dst)
        return np.arange(n_dst) * ((n_src - 1) / (n_dst - 1))

    ys = _coords(src_h, height)
    xs = _coords(src_w, width)
    y0 = np.clip(np.floor(ys).astype(int), 0, src_h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, src_w - 1)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]

    top = arr[np.ix_(y0, x0)] * (1 - fx) + arr[np.ix_(y0, x1)] * fx
    bottom = arr[np.ix_(y1, x0)] * (1 - fx) + arr[np.ix_(y1, x1)] * fx
    out = top * (1 - fy) + bottom * fy
    if arr.min() >= 0.0 and arr.max() <= 1.0:
        out = np.clip(out, 0.0, 1.0)
    return out


def top_k_classes(scores: np.ndarray, k: int) -> list[int]:
    """Indices of the k largest scores, descending; ties favor lower index."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    if k > s.size:
        raise ValueError(f"k={k} exceeds the {s.size} available classes")
    if k < 1:
        raise ValueError("k must be >= 1")
    order = np.argsort(-s, kind="stable")
    return [int(i) for i in order[:k]]
