"""End-to-end defense pipeline, ensemble voting, and hyperparameter sweeps.

The defense runs deflect -> RGB-to-YCbCr -> per-channel wavelet shrinkage
-> YCbCr-to-RGB, entirely determined by the input image, the configuration,
and one seed. Ensemble classification repeats the stochastic pipeline with
seeds seed+0 .. seed+n-1 and takes the plurality vote.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .activation import resize_map, robust_map, top_k_classes
from .attacks import LinearSoftmaxClassifier, predict
from .deflection import DeflectionParams, RandomSource, deflect_targeted, deflect_uniform
from .images import load_f32grid, rgb_to_ycbcr, ycbcr_to_rgb
from .wavelets import ShrinkageRule, WaveletSpec, denoise_channel

__all__ = [
    "DefenseConfig",
    "StageError",
    "ZeroMapProvider",
    "FileMapProvider",
    "ClassifierCamProvider",
    "EnsembleOutcome",
    "defend",
    "denoise_image",
    "run_ensemble",
    "ensemble_classify",
    "grid_search",
]


@dataclass(frozen=True)
class DefenseConfig:
    """Everything the defense needs besides the image and the seed.

    Defaults are the reference operating point: sigma 0.04, window apothem
    10, 100 deflections, soft BayesShrink on db1, ensemble of 10, targeted
    deflection when an activation-map provider is available.
    """

    deflection: DeflectionParams = field(default_factory=DeflectionParams)
    use_targeted: bool = True
    k_top: int = 5
    wavelet: WaveletSpec = field(default_factory=WaveletSpec)
    shrinkage: ShrinkageRule = field(default_factory=ShrinkageRule)
    ensemble_size: int = 10

    def __post_init__(self):
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.k_top < 1:
            raise ValueError("k_top must be >= 1")


class StageError(RuntimeError):
    """A pipeline stage failed; `stage` names the culprit."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage


@dataclass(frozen=True)
class ZeroMapProvider:
    """All-zero map: targeted deflection degenerates to uniform behavior."""

    def __call__(self, img: np.ndarray) -> np.ndarray:
        return np.zeros(img.shape[:2])


@dataclass
class FileMapProvider:
    """Activation map loaded from an f32grid file, resized to each image."""

    path: str

    def __post_init__(self):
        arr = load_f32grid(self.path)
        if arr.shape[2] != 1:
            raise ValueError(f"activation map file must have one channel, got {arr.shape}")
        self._map = np.clip(arr[:, :, 0], 0.0, 1.0)

    def __call__(self, img: np.ndarray) -> np.ndarray:
        h, w = img.shape[:2]
        return resize_map(self._map, h, w)


@dataclass
class ClassifierCamProvider:
    """Robust activation map from a linear classifier's weight rows.

    Each class's weight row, reshaped to the image grid and averaged over
    color channels, serves as that class's single-channel activation map;
    the maps of the top-k predicted classes are combined with `robust_map`.
    """

    clf: LinearSoftmaxClassifier
    k_top: int = 5

    def __call__(self, img: np.ndarray) -> np.ndarray:
        scores = predict(self.clf, img)
        k = min(self.k_top, self.clf.n_classes)
        ranked = top_k_classes(scores.probabilities, k)
        h, w, c = self.clf.input_shape
        maps = [self.clf.weights[cls].reshape(h, w, c).mean(axis=2) for cls in ranked]
        return robust_map(maps)


def _stage(name: str, fn, *args):
    try:
        return fn(*args)
    except Exception as exc:
        raise StageError(name, exc) from exc


def defend(
    img: np.ndarray,
    cfg: DefenseConfig,
    provider=None,
    seed: int = 0,
    stage_hook=None,
) -> np.ndarray:
    """Apply the full defense transform, deterministic under `seed`.

    Stages, in order: obtain the activation map (targeted mode only),
    deflect, convert to YCbCr, denoise each channel, convert back, clamp.
    `stage_hook(stage_name, array)` fires after each stage for tracing.
    """
    arr = np.asarray(img, dtype=np.float64)
    params = replace(cfg.deflection, seed=seed)

    if cfg.use_targeted:
        if provider is None:
            raise StageError("activation-map", ValueError("targeted deflection requires a map provider"))
        amap = _stage("activation-map", provider, arr)
        deflected = _stage("deflect", deflect_targeted, arr, amap, params)
    else:
        deflected = _stage("deflect", deflect_uniform, arr, params)
    if stage_hook:
        stage_hook("deflect", deflected)

    color = arr.shape[2] == 3
    working = _stage("to-ycbcr", rgb_to_ycbcr, deflected) if color else deflected
    if stage_hook:
        stage_hook("to-ycbcr", working)

    def _denoise_all(stack: np.ndarray) -> np.ndarray:
        channels = [
            denoise_channel(stack[:, :, ch], cfg.wavelet, cfg.shrinkage)
            for ch in range(stack.shape[2])
        ]
        return np.stack(channels, axis=-1)

    denoised = _stage("denoise", _denoise_all, working)
    if stage_hook:
        stage_hook("denoise", denoised)

    restored = _stage("to-rgb", ycbcr_to_rgb, denoised) if color else denoised
    if stage_hook:
        stage_hook("to-rgb", restored)
    return np.clip(restored, 0.0, 1.0)


def denoise_image(img: np.ndarray, wavelet: WaveletSpec, rule: ShrinkageRule) -> np.ndarray:
    """Wavelet-denoise a whole image: through YCbCr when it has color."""
    arr = np.asarray(img, dtype=np.float64)
    color = arr.ndim == 3 and arr.shape[2] == 3
    working = rgb_to_ycbcr(arr) if color else arr
    channels = [
        denoise_channel(working[:, :, ch], wavelet, rule) for ch in range(working.shape[2])
    ]
    denoised = np.stack(channels, axis=-1)
    restored = ycbcr_to_rgb(denoised) if color else denoised
    return np.clip(restored, 0.0, 1.0)


@dataclass(frozen=True)
class EnsembleOutcome:
    """Per-run votes, their mean probability vector, and the final call."""

    run_predictions: tuple[int, ...]
    mean_probabilities: np.ndarray
    prediction: int


def run_ensemble(
    clf: LinearSoftmaxClassifier,
    img: np.ndarray,
    cfg: DefenseConfig,
    provider=None,
    seed: int = 0,
    runs: int | None = None,
) -> EnsembleOutcome:
    """Defend-and-classify `runs` times with seeds seed+0 .. seed+runs-1.

    The winner is the plurality class; ties break by the higher mean
    probability across runs, then by the lower class index.
    """
    n_runs = cfg.ensemble_size if runs is None else runs
    votes: list[int] = []
    probs = np.zeros(clf.n_classes)
    for i in range(n_runs):
        defended = defend(img, cfg, provider=provider, seed=seed + i)
        scores = predict(clf, defended)
        votes.append(scores.top1)
        probs += scores.probabilities
    probs /= n_runs
    counts = np.bincount(votes, minlength=clf.n_classes)
    winner = min(
        range(clf.n_classes),
        key=lambda c: (-counts[c], -probs[c], c),
    )
    return EnsembleOutcome(
        run_predictions=tuple(votes), mean_probabilities=probs, prediction=int(winner)
    )


def ensemble_classify(
    clf: LinearSoftmaxClassifier,
    img: np.ndarray,
    cfg: DefenseConfig,
    provider=None,
    seed: int = 0,
) -> int:
    """Majority-vote class over `cfg.ensemble_size` stochastic defense runs."""
    return run_ensemble(clf, img, cfg, provider=provider, seed=seed).prediction


def grid_search(
    images: np.ndarray,
    labels: np.ndarray,
    clf: LinearSoftmaxClassifier,
    attack_fn,
    sigmas,
    windows,
    deflection_counts,
    base_config: DefenseConfig | None = None,
    provider=None,
    seed: int = 0,
    jobs: int = 1,
    with_ensemble: bool = True,
) -> list[dict]:
    """Evaluate the defense at every (sigma, window, deflections) point.

    Rows come out in grid order (sigma outermost). A failing grid point is
    recorded as a row with empty metrics and an error message instead of
    aborting the sweep. Every point is evaluated with the same seed, so a
    singleton grid reproduces a direct evaluation exactly.
    """
    from .evaluation import evaluate_defense, report_row  # late import: evaluation builds on this module

    if not sigmas or not windows or not deflection_counts:
        raise ValueError("all three grids must be nonempty")
    base = base_config if base_config is not None else DefenseConfig()
    rows: list[dict] = []
    for sigma, window, count in itertools.product(sigmas, windows, deflection_counts):
        cfg = replace(
            base,
            deflection=replace(base.deflection, window_apothem=window, deflections=count),
            shrinkage=replace(base.shrinkage, sigma=sigma),
        )
        started = time.perf_counter()
        try:
            report = evaluate_defense(
                images,
                labels,
                clf,
                attack_fn,
                cfg,
                provider=provider,
                seed=seed,
                jobs=jobs,
                with_ensemble=with_ensemble,
            )
            runtime_ms = int(round(1000.0 * (time.perf_counter() - started)))
            rows.append(report_row(report, runtime_ms=runtime_ms))
        except Exception as exc:
            rows.append(
                {
                    "sigma": sigma,
                    "window": window,
                    "deflections": count,
                    "error": f"{type(exc).__name__}: {exc}",
                }
            )
    return rows
