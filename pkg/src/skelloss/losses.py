"""Differentiable segmentation losses with analytic gradients.

Every loss consumes a channel-major probability field (channel 0 is
background) and returns both its value and the exact partial derivative
with respect to each probability entry.  Entries are treated as free
variables in ``[0, 1]``; the softmax coupling between channels belongs to
the model, not to the losses.

The skeleton-recall term averages, over foreground classes with a
nonempty (tubed-) skeleton target, the soft recall of the prediction on
that target, negated.  Its gradient therefore does not depend on the
predicted values at all: it is ``-1 / (|active classes| * target size)``
on target pixels of each active class and zero elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .validation import check_box_map, check_label_mask, check_same_grid


@dataclass(frozen=True)
class LossConfig:
    """Shared loss hyperparameters.

    alpha : weight of the skeleton-recall term in the combined loss.
    epsilon : smoothing constant for dice and probability clamp for
        cross-entropy.
    include_background : count the background channel as a class in the
        skeleton-recall average (off by default; recall of background on a
        skeleton target is not meaningful).
    """

    alpha: float = 1.0
    epsilon: float = 1e-6
    include_background: bool = False

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term values of the combined loss; total = dice + cce + alpha*srl."""

    dice: float
    cce: float
    srl: float
    total: float


def srl_active_classes(tubed: np.ndarray, num_classes: int, include_background: bool = False) -> tuple[int, ...]:
    """Classes that take part in the skeleton-recall average.

    Foreground classes (1..K) whose target is nonempty; the background
    channel joins only when ``include_background`` is set and background
    pixels exist.
    """
    first = 0 if include_background else 1
    return tuple(k for k in range(first, num_classes + 1) if bool((tubed == k).any()))


def srl_loss(pred, tubed, cfg: LossConfig = LossConfig()) -> tuple[float, np.ndarray, tuple[int, ...]]:
    """Skeleton-recall loss: negated mean soft recall on the skeleton target.

    Parameters
    ----------
    pred : (C, H, W) probability field.
    tubed : (H, W) label mask of skeleton targets (typically the tubed
        skeleton of the ground truth).
    cfg : loss configuration; only ``include_background`` is read here.

    Returns
    -------
    value : float in [-1, 0].
    grad : (C, H, W) gradient; constant in ``pred``.
    active : tuple of class indices that entered the average.  Empty when
        every candidate class has an empty target, in which case value is 0
        and the gradient is identically zero (flag, not an error).
    """
    pred = check_box_map(pred)
    num_classes = pred.shape[0] - 1
    tubed = check_label_mask(tubed, num_classes=num_classes, name="tubed")
    check_same_grid(pred, tubed, "pred", "tubed")

    grad = np.zeros_like(pred)
    active = srl_active_classes(tubed, num_classes, cfg.include_background)
    if not active:
        return 0.0, grad, active

    recalls = []
    for k in active:
        target = tubed == k
        size = int(target.sum())
        recalls.append(float(pred[k][target].sum()) / size)
        # nonzero gradient entries are exactly -1/(|active| * target size)
        grad[k][target] = -1.0 / (len(active) * size)
    value = -math.fsum(recalls) / len(active)
    return value, grad, active


def soft_dice_loss(pred, gt, cfg: LossConfig = LossConfig()) -> tuple[float, np.ndarray]:
    """Soft dice loss over foreground classes, with its analytic gradient.

    Per class: ``(2*sum(s*g) + eps) / (sum(s) + sum(g) + eps)`` with g the
    one-hot ground truth; the loss is one minus the class average.
    """
    pred = check_box_map(pred)
    num_classes = pred.shape[0] - 1
    gt = check_label_mask(gt, num_classes=num_classes, name="gt")
    check_same_grid(pred, gt, "pred", "gt")

    eps = cfg.epsilon
    grad = np.zeros_like(pred)
    scores = []
    for k in range(1, num_classes + 1):
        g = (gt == k).astype(np.float64)
        s = pred[k]
        num = 2.0 * float((s * g).sum()) + eps
        den = float(s.sum()) + float(g.sum()) + eps
        scores.append(num / den)
        grad[k] = -(2.0 * g * den - num) / (num_classes * den * den)
    value = 1.0 - math.fsum(scores) / num_classes
    return value, grad


def cross_entropy_loss(pred, gt, cfg: LossConfig = LossConfig()) -> tuple[float, np.ndarray]:
    """Mean categorical cross-entropy against the hard ground-truth channel.

    Probabilities on the true channel are clamped to ``[epsilon, 1]``; the
    gradient is the derivative of the clamped expression, i.e. zero where
    the clamp is active.
    """
    pred = check_box_map(pred)
    num_classes = pred.shape[0] - 1
    gt = check_label_mask(gt, num_classes=num_classes, name="gt")
    check_same_grid(pred, gt, "pred", "gt")

    eps = cfg.epsilon
    n = gt.size
    rows, cols = np.indices(gt.shape)
    s_true = pred[gt, rows, cols]
    clamped = np.clip(s_true, eps, 1.0)
    value = -float(np.log(clamped).sum()) / n

    grad = np.zeros_like(pred)
    inside = (s_true >= eps) & (s_true <= 1.0)
    per_pixel = np.where(inside, -1.0 / (n * clamped), 0.0)
    grad[gt, rows, cols] = per_pixel
    return value, grad


def combined_loss(pred, gt, tubed, cfg: LossConfig = LossConfig()) -> tuple[LossBreakdown, np.ndarray]:
    """Dice + cross-entropy + alpha * skeleton-recall, value and gradient.

    The skeleton-recall component is always evaluated and reported in the
    breakdown, but contributes to the total and the gradient only through
    ``cfg.alpha``.
    """
    dice, grad_dice = soft_dice_loss(pred, gt, cfg)
    cce, grad_cce = cross_entropy_loss(pred, gt, cfg)
    srl, grad_srl, _ = srl_loss(pred, tubed, cfg)
    total = dice + cce + cfg.alpha * srl
    grad = grad_dice + grad_cce
    if cfg.alpha != 0.0:
        grad += cfg.alpha * grad_srl
    return LossBreakdown(dice=dice, cce=cce, srl=srl, total=total), grad
