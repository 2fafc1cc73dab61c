"""Toy differentiable classifier plus gradient-sign attacks.

The classifier is linear-softmax over flattened pixels: the smallest model
with exact analytic gradients, enough to drive the attack/defense loop at
desk scale. FGSM takes one epsilon-sized step along the loss gradient
sign; IGSM iterates smaller steps, clipping each iterate into the epsilon
max-norm ball around the original image and stopping at the first
misclassification.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .images import load_f32grid, save_f32grid

__all__ = [
    "LinearSoftmaxClassifier",
    "ClassScores",
    "AttackBudget",
    "IgsmResult",
    "predict",
    "loss_gradient",
    "cross_entropy_loss",
    "fgsm",
    "igsm",
    "train_toy_classifier",
    "save_classifier",
    "load_classifier",
    "make_attack",
]


@dataclass
class LinearSoftmaxClassifier:
    """softmax(W @ flatten(img) + b) over (height, width, channels) inputs."""

    weights: np.ndarray  # (n_classes, height * width * channels)
    bias: np.ndarray  # (n_classes,)
    input_shape: tuple[int, int, int]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        h, w, c = self.input_shape
        if self.weights.shape != (self.bias.shape[0], h * w * c):
            raise ValueError(
                f"weights shape {self.weights.shape} inconsistent with "
                f"{self.bias.shape[0]} classes and input {self.input_shape}"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("classifier parameters must be finite")

    @property
    def n_classes(self) -> int:
        return self.bias.shape[0]


@dataclass(frozen=True)
class ClassScores:
    """Per-class logits and softmax probabilities for one image."""

    logits: np.ndarray
    probabilities: np.ndarray

    @property
    def top1(self) -> int:
        return int(np.argmax(self.probabilities))


@dataclass(frozen=True)
class AttackBudget:
    """Max-norm bound epsilon, per-iteration step alpha, iteration cap."""

    epsilon: float
    alpha: float
    max_iterations: int

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class IgsmResult:
    """Final iterate plus whether the attack flipped the prediction."""

    image: np.ndarray
    success: bool
    iterations: int


def _flatten_checked(clf: LinearSoftmaxClassifier, img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.shape != clf.input_shape:
        raise ValueError(f"image shape {arr.shape} does not match classifier input {clf.input_shape}")
    return arr.reshape(-1)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def predict(clf: LinearSoftmaxClassifier, img: np.ndarray) -> ClassScores:
    """Logits W @ x + b and their softmax."""
    x = _flatten_checked(clf, img)
    logits = clf.weights @ x + clf.bias
    return ClassScores(logits=logits, probabilities=_softmax(logits))


def _check_label(clf: LinearSoftmaxClassifier, label: int) -> int:
    if not 0 <= label < clf.n_classes:
        raise ValueError(f"label {label} out of range for {clf.n_classes} classes")
    return int(label)


def cross_entropy_loss(clf: LinearSoftmaxClassifier, img: np.ndarray, label: int) -> float:
    """-log p(label); probabilities floored at 1e-300 to avoid -inf."""
    label = _check_label(clf, label)
    p = predict(clf, img).probabilities[label]
    return float(-np.log(max(p, 1e-300)))


def loss_gradient(clf: LinearSoftmaxClassifier, img: np.ndarray, label: int) -> np.ndarray:
    """Gradient of the cross-entropy loss with respect to each pixel.

    For linear-softmax this is exactly W^T (p - onehot(label)), reshaped to
    the image; the input enters only through the probabilities p.
    """
    label = _check_label(clf, label)
    scores = predict(clf, img)
    err = scores.probabilities.copy()
    err[label] -= 1.0
    return (clf.weights.T @ err).reshape(clf.input_shape)


def fgsm(clf: LinearSoftmaxClassifier, img: np.ndarray, label: int, epsilon: float) -> np.ndarray:
    """One signed-gradient step of size epsilon, clamped to [0, 1].

    sign(0) = 0: pixels with zero gradient are left untouched. The result
    never leaves the epsilon max-norm ball around the input.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    arr = np.asarray(img, dtype=np.float64)
    grad = loss_gradient(clf, arr, label)
    return np.clip(arr + epsilon * np.sign(grad), 0.0, 1.0)


def igsm(
    clf: LinearSoftmaxClassifier, img: np.ndarray, label: int, budget: AttackBudget
) -> IgsmResult:
    """Iterated signed-gradient steps, clipped into the epsilon ball.

    Stops as soon as the running iterate is misclassified; otherwise runs
    max_iterations steps and returns the (valid, clipped) final image with
    success=False. With max_iterations=1 and alpha=epsilon this reproduces
    `fgsm` bit-exactly.
    """
    label = _check_label(clf, label)
    x0 = np.asarray(img, dtype=np.float64)
    lo = x0 - budget.epsilon
    hi = x0 + budget.epsilon
    x = x0
    for it in range(1, budget.max_iterations + 1):
        grad = loss_gradient(clf, x, label)
        x = np.clip(np.clip(x + budget.alpha * np.sign(grad), lo, hi), 0.0, 1.0)
        if predict(clf, x).top1 != label:
            return IgsmResult(image=x, success=True, iterations=it)
    return IgsmResult(image=x, success=False, iterations=budget.max_iterations)


def train_toy_classifier(
    images: np.ndarray,
    labels: np.ndarray,
    epochs: int = 300,
    learning_rate: float = 0.5,
    seed: int = 0,
    on_epoch=None,
) -> LinearSoftmaxClassifier:
    """Full-batch gradient descent on mean cross-entropy.

    Weights start at zero (epochs=0 yields uniform predictions) and the
    whole procedure is deterministic; `seed` is accepted for interface
    uniformity but full-batch training draws nothing from it. With the
    default learning rate the training loss is monotonically nonincreasing
    on [0, 1]-scaled inputs. `on_epoch(epoch, loss)` is called with the
    loss after each update.
    """
    imgs = np.asarray(images, dtype=np.float64)
    if imgs.ndim != 4 or imgs.shape[0] == 0:
        raise ValueError(f"expected a nonempty (N, H, W, C) stack, got shape {imgs.shape}")
    y = np.asarray(labels)
    if y.shape != (imgs.shape[0],):
        raise ValueError("labels must be a vector matching the image count")
    n, h, w, c = imgs.shape
    n_classes = int(y.max()) + 1
    x = imgs.reshape(n, h * w * c)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0

    weights = np.zeros((n_classes, h * w * c))
    bias = np.zeros(n_classes)
    for epoch in range(epochs):
        logits = x @ weights.T + bias
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        probs = e / e.sum(axis=1, keepdims=True)
        err = (probs - onehot) / n
        weights -= learning_rate * (err.T @ x)
        bias -= learning_rate * err.sum(axis=0)
        if on_epoch is not None:
            logits = x @ weights.T + bias
            logits -= logits.max(axis=1, keepdims=True)
            log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
            on_epoch(epoch, float(-log_probs[np.arange(n), y].mean()))
    return LinearSoftmaxClassifier(weights=weights, bias=bias, input_shape=(h, w, c))


def save_classifier(clf: LinearSoftmaxClassifier, path) -> None:
    """Write weights as f32grid plus a JSON sidecar with bias and shape."""
    path = str(path)
    save_f32grid(clf.weights[:, :, None], path)
    meta = {
        "bias": [float(v) for v in clf.bias],
        "input_shape": list(clf.input_shape),
    }
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_classifier(path) -> LinearSoftmaxClassifier:
    """Read a classifier written by `save_classifier`."""
    path = str(path)
    weights = load_f32grid(path)[:, :, 0]
    with open(path + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    shape = tuple(int(v) for v in meta["input_shape"])
    return LinearSoftmaxClassifier(
        weights=weights, bias=np.asarray(meta["bias"], dtype=np.float64), input_shape=shape
    )


def make_attack(name: str, epsilon: float = 0.03, alpha: float = 0.0075, iterations: int = 10):
    """Build an attack callable (clf, img, label) -> attacked image.

    "none" returns the input unchanged (the identity attack used to measure
    defended accuracy on clean images).
    """
    if name == "fgsm":
        return _FgsmAttack(epsilon)
    if name == "igsm":
        return _IgsmAttack(AttackBudget(epsilon=epsilon, alpha=alpha, max_iterations=iterations))
    if name == "none":
        return _IdentityAttack()
    raise ValueError(f"unknown attack {name!r}; expected fgsm, igsm, or none")


@dataclass(frozen=True)
class _FgsmAttack:
    epsilon: float

    def __call__(self, clf, img, label):
        return fgsm(clf, img, label, self.epsilon)


@dataclass(frozen=True)
class _IgsmAttack:
    budget: AttackBudget

    def __call__(self, clf, img, label):
        return igsm(clf, img, label, self.budget).image


@dataclass(frozen=True)
class _IdentityAttack:
    def __call__(self, clf, img, label):
        return np.asarray(img, dtype=np.float64)
