"""Per-pixel softmax classifier trained with the combined loss.

The model is multinomial logistic regression on six hand-picked pixel
features, trained by full-batch gradient descent from zero weights.  It
is intentionally tiny: every arithmetic step is deterministic, and the
loss gradients flow through an explicit softmax Jacobian, so the whole
training trajectory can be checked against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .losses import LossBreakdown, LossConfig, cross_entropy_loss, soft_dice_loss, srl_loss
from .metrics import MetricsReport, METRIC_NAMES, evaluate_masks, hard_predict
from .raster import StructuringElement, skeletonize_no_ts, tubed_skeletonize
from .validation import check_label_mask

FEATURE_NAMES = ("intensity", "blur1", "blur2", "blur4", "gradmag", "bias")
NUM_FEATURES = len(FEATURE_NAMES)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-D gaussian taps with radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    r = int(math.ceil(3.0 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _correlate1d(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(img, pad, mode="reflect")
    out = np.zeros(img.shape, dtype=np.float64)
    for i, w in enumerate(kernel):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(i, i + img.shape[axis])
        out += w * padded[tuple(sl)]
    return out


def blur(image, sigma: float) -> np.ndarray:
    """Gaussian blur as two 1-D passes over a reflect-padded image."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    kernel = gaussian_kernel1d(sigma)
    return _correlate1d(_correlate1d(img, kernel, 0), kernel, 1)


def gradient_magnitude(image) -> np.ndarray:
    """Euclidean norm of the central-difference intensity gradient."""
    img = np.asarray(image, dtype=np.float64)
    gy, gx = np.gradient(img)
    return np.hypot(gy, gx)


def extract_features(image) -> np.ndarray:
    """Stack the model features as a (features, H, W) array.

    Features are the raw intensity, three gaussian blurs (sigma 1, 2, 4),
    the gradient magnitude, and a constant bias plane.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    return np.stack(
        [img, blur(img, 1.0), blur(img, 2.0), blur(img, 4.0),
         gradient_magnitude(img), np.ones_like(img)]
    )


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    ``seed`` records which data seed the run belongs to; the optimization
    itself is full-batch from zero weights and draws no random numbers.
    """

    learning_rate: float = 0.5
    epochs: int = 200
    alpha: float = 1.0
    use_ts: bool = True
    use_dice: bool = True
    use_cce: bool = True
    epsilon: float = 1e-6
    include_background: bool = False
    se_shape: str = "square"
    se_radius: int = 1
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        StructuringElement(self.se_shape, self.se_radius)  # validates both

    def loss_config(self) -> LossConfig:
        return LossConfig(alpha=self.alpha, epsilon=self.epsilon,
                          include_background=self.include_background)


class TrainingDivergedError(RuntimeError):
    """Raised when a loss or weight turns non-finite during training."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged at epoch {epoch}")
        self.epoch = epoch


def forward(weights: np.ndarray, feats: np.ndarray) -> np.ndarray:
    """Per-pixel softmax of the linear scores, (channels, H, W).

    Overflowing scores propagate as NaN probabilities; the training loop
    detects them and reports divergence instead of warning here.
    """
    with np.errstate(invalid="ignore"):
        z = np.einsum("cf,fhw->chw", weights, feats)
        z = z - z.max(axis=0, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=0, keepdims=True)


def backward(probs: np.ndarray, grad_probs: np.ndarray, feats: np.ndarray) -> np.ndarray:
    """Pull a probability-space gradient back to weight space.

    Applies the softmax Jacobian per pixel and contracts against the
    features: dz_c = p_c * (g_c - sum_d g_d p_d), dW = dz . feats.
    """
    inner = (grad_probs * probs).sum(axis=0, keepdims=True)
    dz = probs * (grad_probs - inner)
    return np.einsum("chw,fhw->cf", dz, feats)


def batch_loss_and_grad(weights, feats_list, gts, tubeds, cfg: TrainConfig):
    """Mean combined loss and weight gradient over a batch of images.

    Returns (LossBreakdown, dW); the breakdown always reports the
    skeleton-recall value even when alpha leaves it out of the total.
    """
    loss_cfg = cfg.loss_config()
    n = len(feats_list)
    dw = np.zeros_like(weights)
    parts = {name: [] for name in ("dice", "cce", "srl", "total")}
    for feats, gt, tubed in zip(feats_list, gts, tubeds):
        probs = forward(weights, feats)
        if not np.isfinite(probs).all():
            nan = float("nan")
            return LossBreakdown(dice=nan, cce=nan, srl=nan, total=nan), dw
        grad_p = np.zeros_like(probs)
        dice = cce = 0.0
        if cfg.use_dice:
            dice, g = soft_dice_loss(probs, gt, loss_cfg)
            grad_p += g
        if cfg.use_cce:
            cce, g = cross_entropy_loss(probs, gt, loss_cfg)
            grad_p += g
        srl, g, _ = srl_loss(probs, tubed, loss_cfg)
        if cfg.alpha != 0.0:
            grad_p += cfg.alpha * g
        parts["dice"].append(dice)
        parts["cce"].append(cce)
        parts["srl"].append(srl)
        parts["total"].append(dice + cce + cfg.alpha * srl)
        dw += backward(probs, grad_p, feats)
    means = {name: math.fsum(vals) / n for name, vals in parts.items()}
    return LossBreakdown(**means), dw / n


@dataclass(frozen=True)
class TrainResult:
    weights: np.ndarray  # (num_classes + 1, num_features)
    history: tuple  # LossBreakdown per epoch
    num_classes: int


def prepare_targets(gts, cfg: TrainConfig) -> list[np.ndarray]:
    """Skeleton targets for the recall term, per the configured transform."""
    se = StructuringElement(cfg.se_shape, cfg.se_radius)
    op = tubed_skeletonize if cfg.use_ts else skeletonize_no_ts
    return [op(gt, se) for gt in gts]


def train(images, gts, cfg: TrainConfig = TrainConfig(), num_classes: int | None = None,
          on_epoch=None) -> TrainResult:
    """Full-batch gradient descent from zero weights.

    ``on_epoch(epoch, weights, breakdown)``, if given, observes the state
    after each update.  ``epochs=0`` returns the zero weights untouched.
    """
    if len(images) == 0 or len(images) != len(gts):
        raise ValueError(f"need equally many images and masks, got {len(images)}/{len(gts)}")
    if num_classes is None:
        num_classes = max(1, max(int(np.asarray(g).max()) for g in gts))
    gts = [check_label_mask(g, num_classes=num_classes, name=f"gt[{i}]")
           for i, g in enumerate(gts)]
    tubeds = prepare_targets(gts, cfg)
    feats_list = [extract_features(im) for im in images]

    weights = np.zeros((num_classes + 1, NUM_FEATURES), dtype=np.float64)
    history = []
    for epoch in range(cfg.epochs):
        breakdown, dw = batch_loss_and_grad(weights, feats_list, gts, tubeds, cfg)
        if not math.isfinite(breakdown.total):
            raise TrainingDivergedError(epoch)
        weights = weights - cfg.learning_rate * dw
        if not np.isfinite(weights).all():
            raise TrainingDivergedError(epoch)
        history.append(breakdown)
        if on_epoch is not None:
            on_epoch(epoch, weights.copy(), breakdown)
    return TrainResult(weights=weights, history=tuple(history), num_classes=num_classes)


def predict_proba(weights, image) -> np.ndarray:
    return forward(np.asarray(weights, dtype=np.float64), extract_features(image))


def predict(weights, image, threshold: float = 0.5) -> np.ndarray:
    return hard_predict(predict_proba(weights, image), threshold)


@dataclass(frozen=True)
class EvalResult:
    """Per-image metric reports and their macro means across images."""

    per_image: tuple  # MetricsReport per image
    mean: dict  # metric name -> mean of per-image macro values


def evaluate(weights, images, gts, threshold: float = 0.5,
             num_classes: int | None = None) -> EvalResult:
    """Hard-predict every image and average the macro metrics."""
    if len(images) == 0 or len(images) != len(gts):
        raise ValueError(f"need equally many images and masks, got {len(images)}/{len(gts)}")
    if num_classes is None:
        num_classes = np.asarray(weights).shape[0] - 1
    reports: list[MetricsReport] = []
    for image, gt in zip(images, gts):
        pred = predict(weights, image, threshold)
        reports.append(evaluate_masks(pred, gt, num_classes=num_classes))
    mean = {name: math.fsum(r.macro[name] for r in reports) / len(reports)
            for name in METRIC_NAMES}
    return EvalResult(per_image=tuple(reports), mean=mean)


class PixelSoftmaxClassifier(BaseEstimator):
    """Estimator wrapper around :func:`train` / :func:`predict`.

    Parameters mirror :class:`TrainConfig`; ``num_classes=None`` infers the
    class count from the masks seen in ``fit``.

    Attributes set by ``fit``: ``coef_`` (weights), ``history_`` (loss
    breakdown per epoch), ``num_classes_``.
    """

    def __init__(self, learning_rate=0.5, epochs=200, alpha=1.0, use_ts=True,
                 use_dice=True, use_cce=True, epsilon=1e-6, include_background=False,
                 se_shape="square", se_radius=1, threshold=0.5, seed=0, num_classes=None):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.alpha = alpha
        self.use_ts = use_ts
        self.use_dice = use_dice
        self.use_cce = use_cce
        self.epsilon = epsilon
        self.include_background = include_background
        self.se_shape = se_shape
        self.se_radius = se_radius
        self.threshold = threshold
        self.seed = seed
        self.num_classes = num_classes

    def _config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, epochs=self.epochs, alpha=self.alpha,
            use_ts=self.use_ts, use_dice=self.use_dice, use_cce=self.use_cce,
            epsilon=self.epsilon, include_background=self.include_background,
            se_shape=self.se_shape, se_radius=self.se_radius, threshold=self.threshold,
            seed=self.seed,
        )

    def fit(self, X, y):
        result = train(list(X), list(y), self._config(), num_classes=self.num_classes)
        self.coef_ = result.weights
        self.history_ = result.history
        self.num_classes_ = result.num_classes
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "coef_")
        return [predict_proba(self.coef_, image) for image in X]

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return [predict(self.coef_, image, self.threshold) for image in X]

    def score(self, X, y):
        """Mean macro dice over the given pairs, scaled to [0, 1]."""
        check_is_fitted(self, "coef_")
        result = evaluate(self.coef_, list(X), list(y), self.threshold, self.num_classes_)
        return result.mean["dsc"] / 100.0
