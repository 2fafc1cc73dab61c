"""Pixel deflection image defense with wavelet shrinkage denoising.

A library and CLI implementing stochastic local pixel resampling (optionally
weighted by a robust class-activation map), wavelet-domain adaptive
thresholding, gradient-sign attacks against a toy differentiable classifier,
and a seeded evaluation harness reporting accuracy and destruction rate.
"""

from .activation import cam_from_features, resize_map, robust_map, top_k_classes
from .attacks import (
    AttackBudget,
    ClassScores,
    LinearSoftmaxClassifier,
    fgsm,
    igsm,
    load_classifier,
    loss_gradient,
    make_attack,
    predict,
    save_classifier,
    train_toy_classifier,
)
from .deflection import (
    DeflectionParams,
    RandomSource,
    deflect_targeted,
    deflect_uniform,
    sample_window,
)
from .evaluation import (
    EvalRecord,
    EvalReport,
    destruction_rate,
    evaluate_defense,
    top1_accuracy,
)
from .images import (
    load_image,
    normalized_rmse,
    rgb_to_ycbcr,
    save_image,
    ycbcr_to_rgb,
)
from .pipeline import (
    ClassifierCamProvider,
    DefenseConfig,
    FileMapProvider,
    ZeroMapProvider,
    defend,
    ensemble_classify,
    grid_search,
)
from .synthetic import load_manifest, make_synthetic_dataset, write_manifest
from .wavelets import (
    ShrinkageRule,
    WaveletSpec,
    bayes_threshold,
    denoise_channel,
    dwt2,
    estimate_noise_mad,
    hard_threshold,
    idwt2,
    soft_threshold,
    sure_threshold,
    visu_threshold,
)

__version__ = "0.1.0"
