"""Independent gradient verification: finite differences and pixel-category audit.

The finite-difference oracle perturbs raw probability entries one at a
time without re-normalizing the per-pixel simplex; the losses are defined
on the box ``[0, 1]^C``, and the softmax coupling is checked separately in
parameter space by the classifier tests.

The category audit buckets every (pixel, class) pair by its confusion
category against the original ground truth (TP/TN/FP/FN at a hard
threshold) crossed with skeleton-target membership, then summarizes the
skeleton-recall gradient per bucket.  Off-target buckets must be exactly
zero; on-target buckets must share one constant value per class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .losses import LossConfig, combined_loss, cross_entropy_loss, soft_dice_loss, srl_loss
from .metrics import hard_predict
from .validation import check_label_mask, check_prob_map, check_same_grid

CATEGORIES = ("TP", "TN", "FP", "FN")

LOSS_NAMES = ("srl", "dice", "cce", "combined")


def loss_evaluator(name: str, gt, tubed, cfg: LossConfig = LossConfig()) -> Callable[[np.ndarray], float]:
    """Closure evaluating one named loss value on a probability field."""
    if name == "srl":
        return lambda p: srl_loss(p, tubed, cfg)[0]
    if name == "dice":
        return lambda p: soft_dice_loss(p, gt, cfg)[0]
    if name == "cce":
        return lambda p: cross_entropy_loss(p, gt, cfg)[0]
    if name == "combined":
        return lambda p: combined_loss(p, gt, tubed, cfg)[0].total
    raise ValueError(f"unknown loss {name!r}, expected one of {LOSS_NAMES}")


def analytic_grad(name: str, pred, gt, tubed, cfg: LossConfig = LossConfig()) -> np.ndarray:
    """Analytic gradient of one named loss."""
    if name == "srl":
        return srl_loss(pred, tubed, cfg)[1]
    if name == "dice":
        return soft_dice_loss(pred, gt, cfg)[1]
    if name == "cce":
        return cross_entropy_loss(pred, gt, cfg)[1]
    if name == "combined":
        return combined_loss(pred, gt, tubed, cfg)[1]
    raise ValueError(f"unknown loss {name!r}, expected one of {LOSS_NAMES}")


def finite_diff_grad(loss: Callable[[np.ndarray], float], pred, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of ``loss`` at ``pred``, entry by entry.

    Raises ``ValueError`` naming the offending entry if the loss evaluates
    to a non-finite value at any perturbed point.
    """
    if h <= 0:
        raise ValueError(f"step h must be > 0, got {h}")
    base = np.array(pred, dtype=np.float64, copy=True)
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        saved = base[idx]
        base[idx] = saved + h
        up = loss(base)
        base[idx] = saved - h
        down = loss(base)
        base[idx] = saved
        if not (math.isfinite(up) and math.isfinite(down)):
            raise ValueError(f"loss is not finite when perturbing entry {idx}")
        grad[idx] = (up - down) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class GradComparison:
    """Elementwise comparison of two gradient fields."""

    max_abs_err: float
    max_rel_err: float
    worst_entry: tuple[int, ...]
    tol: float
    passed: bool


def compare_grads(a, b, tol: float = 1e-4) -> GradComparison:
    """Max absolute and relative error between two gradients of equal shape.

    Relative error uses ``|a| + 1e-8`` as the denominator; the comparison
    passes when the max relative error is below ``tol``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    abs_err = np.abs(a - b)
    rel_err = abs_err / (np.abs(a) + 1e-8)
    worst = np.unravel_index(int(np.argmax(rel_err)), rel_err.shape)
    max_rel = float(rel_err[worst])
    return GradComparison(
        max_abs_err=float(abs_err.max()),
        max_rel_err=max_rel,
        worst_entry=tuple(int(i) for i in worst),
        tol=tol,
        passed=bool(max_rel < tol),
    )


def random_prob_map(height: int, width: int | None = None, num_classes: int = 1,
                    rng: np.random.Generator | None = None, logit_scale: float = 0.75) -> np.ndarray:
    """Random probability field via softmax of mild Gaussian logits.

    The modest logit scale keeps every entry well away from 0 and 1, so
    finite differences stay clear of the cross-entropy clamp and of
    truncation error blow-up at tiny probabilities.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if width is None:
        width = height
    logits = logit_scale * rng.standard_normal((num_classes + 1, height, width))
    logits -= logits.max(axis=0, keepdims=True)
    expd = np.exp(logits)
    return expd / expd.sum(axis=0, keepdims=True)


def random_label_mask(height: int, width: int | None = None, num_classes: int = 1,
                      rng: np.random.Generator | None = None, foreground_fraction: float = 0.35) -> np.ndarray:
    """Random speckle label mask; foreground pixels get a uniform class."""
    if rng is None:
        rng = np.random.default_rng(0)
    if width is None:
        width = height
    fg = rng.random((height, width)) < foreground_fraction
    labels = rng.integers(1, num_classes + 1, size=(height, width))
    return np.where(fg, labels, 0).astype(np.int64)


@dataclass
class CategoryBucket:
    """Gradient statistics of one (class, category, on_target) cell."""

    class_id: int
    category: str
    on_skeleton: bool
    count: int
    grad_min: float
    grad_max: float
    grad_mean: float


@dataclass
class AuditReport:
    """Skeleton-recall gradient statistics per pixel-category bucket.

    ``zero_off_skeleton`` asserts that every bucket off the skeleton target
    (including all TN and FP buckets for a genuine tubed skeleton) carries
    an identically zero gradient; ``constant_on_skeleton`` asserts that all
    on-target entries of one class share the single expected value.
    """

    buckets: list[CategoryBucket]
    expected_on_value: dict[int, float]
    zero_off_skeleton: bool
    constant_on_skeleton: bool
    num_pixels: int
    num_classes: int
    active_classes: tuple[int, ...] = field(default_factory=tuple)

    def bucket(self, class_id: int, category: str, on_skeleton: bool) -> CategoryBucket:
        for b in self.buckets:
            if (b.class_id, b.category, b.on_skeleton) == (class_id, category, on_skeleton):
                return b
        raise KeyError((class_id, category, on_skeleton))

    def to_json(self) -> dict:
        return {
            "num_pixels": self.num_pixels,
            "num_classes": self.num_classes,
            "active_classes": list(self.active_classes),
            "zero_off_skeleton": self.zero_off_skeleton,
            "constant_on_skeleton": self.constant_on_skeleton,
            "expected_on_value": {str(k): v for k, v in self.expected_on_value.items()},
            "buckets": [
                {
                    "class": b.class_id,
                    "category": b.category,
                    "on_skeleton": b.on_skeleton,
                    "count": b.count,
                    "grad_min": b.grad_min,
                    "grad_max": b.grad_max,
                    "grad_mean": b.grad_mean,
                }
                for b in self.buckets
            ],
        }


def category_audit(pred, gt, tubed, threshold: float = 0.5, cfg: LossConfig = LossConfig()) -> AuditReport:
    """Bucket the skeleton-recall gradient by confusion category and target membership.

    Categories compare the hard prediction against the original ground
    truth, not against the skeleton target; membership is evaluated on the
    skeleton target.  Bucket counts over (category x membership) sum to
    ``num_pixels * num_classes``.
    """
    pred = check_prob_map(pred)
    num_classes = pred.shape[0] - 1
    gt = check_label_mask(gt, num_classes=num_classes, name="gt")
    tubed = check_label_mask(tubed, num_classes=num_classes, name="tubed")
    check_same_grid(pred, gt, "pred", "gt")
    check_same_grid(pred, tubed, "pred", "tubed")

    _, grad, active = srl_loss(pred, tubed, cfg)
    hard = hard_predict(pred, threshold)

    buckets: list[CategoryBucket] = []
    expected: dict[int, float] = {}
    zero_off = True
    constant_on = True
    for k in range(1, num_classes + 1):
        pred_pos = hard == k
        gt_pos = gt == k
        on_target = tubed == k
        size = int(on_target.sum())
        expected[k] = -1.0 / (len(active) * size) if (k in active and size) else 0.0
        masks = {
            "TP": pred_pos & gt_pos,
            "TN": ~pred_pos & ~gt_pos,
            "FP": pred_pos & ~gt_pos,
            "FN": ~pred_pos & gt_pos,
        }
        for category in CATEGORIES:
            for member in (True, False):
                sel = masks[category] & (on_target == member)
                count = int(sel.sum())
                entries = grad[k][sel]
                if count:
                    lo = float(entries.min())
                    hi = float(entries.max())
                    mean = math.fsum(entries.tolist()) / count
                else:
                    lo = hi = mean = 0.0
                buckets.append(CategoryBucket(k, category, member, count, lo, hi, mean))
                if count:
                    if not member and (lo != 0.0 or hi != 0.0):
                        zero_off = False
                    if member and (lo != expected[k] or hi != expected[k]):
                        constant_on = False
    return AuditReport(
        buckets=buckets,
        expected_on_value=expected,
        zero_off_skeleton=zero_off,
        constant_on_skeleton=constant_on,
        num_pixels=int(gt.size),
        num_classes=num_classes,
        active_classes=active,
    )


@dataclass(frozen=True)
class ConstancyReport:
    """Outcome of repeated-gradient probing over random predictions."""

    identical: bool
    trials: int
    loss: str
    max_abs_diff: float


def gradient_constancy_probe(tubed, cfg: LossConfig = LossConfig(), trials: int = 10,
                             num_classes: int | None = None, seed: int = 0,
                             loss: str = "srl") -> ConstancyReport:
    """Check whether a loss gradient is invariant to the prediction.

    Draws ``trials`` random probability fields against one fixed target and
    compares the gradients bitwise.  True for the skeleton-recall loss by
    construction; false for prediction-dependent losses like dice.
    """
    if trials < 2:
        raise ValueError(f"need at least 2 trials, got {trials}")
    tubed = check_label_mask(tubed, name="tubed")
    if num_classes is None:
        num_classes = max(1, int(tubed.max()))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    h, w = tubed.shape
    reference = None
    identical = True
    max_diff = 0.0
    for _ in range(trials):
        pred = random_prob_map(h, w, num_classes=num_classes, rng=rng)
        grad = analytic_grad(loss, pred, tubed, tubed, cfg)
        if reference is None:
            reference = grad
            continue
        if not np.array_equal(reference, grad):
            identical = False
        max_diff = max(max_diff, float(np.abs(reference - grad).max()))
    return ConstancyReport(identical=identical, trials=trials, loss=loss, max_abs_diff=max_diff)
