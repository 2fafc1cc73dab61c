"""Pixel deflection: stochastic local resampling of pixels.

The uniform transform repeatedly picks a random pixel and overwrites it
with a pixel drawn uniformly from the square window of Chebyshev radius r
around it (clipped to the image). The targeted variant gates each attempt
on an activation map: a pixel at map value v is deflected only when v falls
below a fresh uniform draw, so salient regions (v near 1) are mostly left
alone and background (v near 0) is resampled freely.

All randomness flows through `RandomSource`, a seeded PCG64 generator with
a fixed draw order per iteration, so runs are bit-reproducible:

  uniform:  px, py, nx, ny
  targeted: px, py, gate u, then (only if deflecting) nx, ny
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DeflectionParams",
    "RandomSource",
    "TraceRow",
    "sample_window",
    "deflect_uniform",
    "deflect_targeted",
    "write_trace",
]


@dataclass(frozen=True)
class DeflectionParams:
    """Window apothem r, deflection count K, and the RNG seed."""

    window_apothem: int = 10
    deflections: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.window_apothem < 1:
            raise ValueError("window_apothem must be >= 1")
        if self.deflections < 0:
            raise ValueError("deflections must be >= 0")


class RandomSource:
    """Seeded random draws backed by numpy's PCG64 bit generator.

    The same seed and call sequence reproduce the same outputs bit-exactly
    across runs and platforms (for a fixed numpy version). Integers come
    from `Generator.integers`, uniforms from `Generator.random`.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def randint(self, low: int, high: int) -> int:
        """Uniform integer in [low, high): half-open like range()."""
        return int(self._gen.integers(low, high))

    def uniform01(self) -> float:
        """Uniform float in [0, 1)."""
        return float(self._gen.random())

    def position(self, width: int, height: int) -> tuple[int, int]:
        """Uniform pixel position; x is drawn first, then y."""
        return self.randint(0, width), self.randint(0, height)


@dataclass(frozen=True)
class TraceRow:
    """One deflection attempt: target p, source n, and whether it was gated.

    Gated attempts (targeted variant only) never draw a source; their
    n coordinates are recorded as -1.
    """

    iteration: int
    px: int
    py: int
    nx: int
    ny: int
    gated: int


def sample_window(
    p: tuple[int, int], r: int, width: int, height: int, rng: RandomSource
) -> tuple[int, int]:
    """Draw a pixel uniformly from the in-bounds Chebyshev-r window around p.

    The window is the square

        |q.x - p.x| <= r and |q.y - p.y| <= r

    intersected with the image; p itself is a candidate. x is drawn before y.
    """
    px, py = p
    if not (0 <= px < width and 0 <= py < height):
        raise ValueError(f"position {p} outside {width}x{height} image")
    x0, x1 = max(0, px - r), min(width - 1, px + r)
    y0, y1 = max(0, py - r), min(height - 1, py + r)
    return rng.randint(x0, x1 + 1), rng.randint(y0, y1 + 1)


def _check_image(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got shape {arr.shape}")
    return arr


def deflect_uniform(
    img: np.ndarray,
    params: DeflectionParams,
    rng: RandomSource | None = None,
    trace: list[TraceRow] | None = None,
) -> np.ndarray:
    """Apply K uniform pixel deflections; reads always come from `img`.

    The output starts as a copy and at most K pixel positions change; each
    changed position receives the full channel tuple of some original pixel
    within Chebyshev distance r.
    """
    arr = _check_image(img)
    height, width = arr.shape[:2]
    rng = rng if rng is not None else RandomSource(params.seed)
    out = arr.copy()
    r = params.window_apothem
    for i in range(params.deflections):
        p = rng.position(width, height)
        n = sample_window(p, r, width, height, rng)
        out[p[1], p[0]] = arr[n[1], n[0]]
        if trace is not None:
            trace.append(TraceRow(i, p[0], p[1], n[0], n[1], gated=0))
    return out


def deflect_targeted(
    img: np.ndarray,
    activation_map: np.ndarray,
    params: DeflectionParams,
    rng: RandomSource | None = None,
    trace: list[TraceRow] | None = None,
) -> np.ndarray:
    """Deflect with probability 1 - map value at each attempted position.

    Runs exactly K attempts. Per attempt: draw p, read v = map(p), draw
    u ~ U(0,1), and deflect (exactly as the uniform variant would) iff
    v < u. A blocked attempt consumes no window draw.
    """
    arr = _check_image(img)
    height, width = arr.shape[:2]
    amap = np.asarray(activation_map, dtype=np.float64)
    if amap.shape != (height, width):
        raise ValueError(f"activation map shape {amap.shape} does not match image {arr.shape[:2]}")
    if amap.size and (amap.min() < 0.0 or amap.max() > 1.0):
        raise ValueError("activation map values must lie in [0, 1]")
    rng = rng if rng is not None else RandomSource(params.seed)
    out = arr.copy()
    r = params.window_apothem
    for i in range(params.deflections):
        p = rng.position(width, height)
        v = amap[p[1], p[0]]
        u = rng.uniform01()
        if v < u:
            n = sample_window(p, r, width, height, rng)
            out[p[1], p[0]] = arr[n[1], n[0]]
            if trace is not None:
                trace.append(TraceRow(i, p[0], p[1], n[0], n[1], gated=0))
        elif trace is not None:
            trace.append(TraceRow(i, p[0], p[1], -1, -1, gated=1))
    return out


def write_trace(rows: list[TraceRow], path) -> None:
    """Write trace rows as CSV with columns iteration,px,py,nx,ny,gated."""
    with open(str(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "px", "py", "nx", "ny", "gated"])
        for row in rows:
            writer.writerow([row.iteration, row.px, row.py, row.nx, row.ny, row.gated])
