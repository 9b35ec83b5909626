"""Overlap and topology evaluation metrics from hard masks.

All metrics are computed one-vs-rest per foreground class from pixel
confusion counts and reported as percentages, plus a macro average over
the foreground classes.  clDice compares class skeletons: precision of
the prediction's skeleton against the ground-truth mask and sensitivity
of the ground truth's skeleton against the predicted mask, combined as a
harmonic mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raster import skeletonize
from .validation import check_label_mask, check_prob_map, check_same_grid

METRIC_NAMES = ("dsc", "cldice", "jsi", "fnr", "fpr")
# larger-is-better flags, in METRIC_NAMES order
METRIC_HIGHER_IS_BETTER = {"dsc": True, "cldice": True, "jsi": True, "fnr": False, "fpr": False}


@dataclass
class ConfusionCounts:
    """One-vs-rest pixel tallies per foreground class (index 0 = class 1)."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray
    num_pixels: int

    @property
    def num_classes(self) -> int:
        return len(self.tp)


@dataclass
class MetricsReport:
    """Per-class and macro-averaged metric percentages."""

    per_class: dict[int, dict[str, float]] = field(default_factory=dict)
    macro: dict[str, float] = field(default_factory=dict)


def hard_predict(pred, threshold: float = 0.5) -> np.ndarray:
    """Collapse a probability field to a hard label mask.

    Binary (one foreground class): label 1 where the class-1 probability is
    >= threshold, so a probability of exactly 0.5 counts as foreground.
    Multiclass: argmax over channels (ties resolve to the lowest channel).
    """
    pred = check_prob_map(pred)
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if pred.shape[0] == 2:
        return (pred[1] >= threshold).astype(np.int64)
    return np.argmax(pred, axis=0).astype(np.int64)


def confusion(pred, gt, num_classes: int | None = None) -> ConfusionCounts:
    """Per-class one-vs-rest confusion counts between two label masks."""
    pred = check_label_mask(pred, name="pred")
    gt = check_label_mask(gt, name="gt")
    check_same_grid(pred, gt, "pred", "gt")
    if num_classes is None:
        num_classes = max(1, int(pred.max()), int(gt.max()))
    n = gt.size
    tp = np.zeros(num_classes, dtype=np.int64)
    fp = np.zeros(num_classes, dtype=np.int64)
    fn = np.zeros(num_classes, dtype=np.int64)
    tn = np.zeros(num_classes, dtype=np.int64)
    for k in range(1, num_classes + 1):
        p = pred == k
        g = gt == k
        tp[k - 1] = np.count_nonzero(p & g)
        fp[k - 1] = np.count_nonzero(p & ~g)
        fn[k - 1] = np.count_nonzero(~p & g)
        tn[k - 1] = n - tp[k - 1] - fp[k - 1] - fn[k - 1]
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn, num_pixels=n)


def _percent(num: int, den: int, if_empty: float) -> float:
    """100*num/den with a documented fallback for an empty denominator."""
    if den == 0:
        return if_empty
    return 100.0 * num / den


def overlap_metrics(counts: ConfusionCounts) -> MetricsReport:
    """DSC, JSI, FNR, FPR from confusion counts (clDice needs the masks).

    Empty-denominator conventions: DSC and JSI are 100 when prediction and
    ground truth are both empty; FNR is 0 without ground-truth positives;
    FPR is 0 without ground-truth negatives.
    """
    report = MetricsReport()
    for k in range(1, counts.num_classes + 1):
        tp, fp, fn, tn = (int(x[k - 1]) for x in (counts.tp, counts.fp, counts.fn, counts.tn))
        report.per_class[k] = {
            "dsc": _percent(2 * tp, 2 * tp + fp + fn, 100.0),
            "jsi": _percent(tp, tp + fp + fn, 100.0),
            "fnr": _percent(fn, fn + tp, 0.0),
            "fpr": _percent(fp, fp + tn, 0.0),
        }
    for name in ("dsc", "jsi", "fnr", "fpr"):
        report.macro[name] = float(np.mean([report.per_class[k][name] for k in report.per_class]))
    return report


def cl_dice(pred, gt, num_classes: int | None = None) -> dict[int | str, float]:
    """clDice percentage per foreground class plus a ``"macro"`` entry.

    Per class: Tprec = |skel(P) & G| / |skel(P)|, Tsens = |skel(G) & P| /
    |skel(G)|, clDice = harmonic mean of the two.  Both masks empty scores
    100, mismatched emptiness scores 0.  A nonempty mask whose skeleton
    thins away completely (e.g. an isolated 2x2 block) falls back to the
    mask itself, keeping the ratios defined and identical masks at 100.
    """
    pred = check_label_mask(pred, name="pred")
    gt = check_label_mask(gt, name="gt")
    check_same_grid(pred, gt, "pred", "gt")
    if num_classes is None:
        num_classes = max(1, int(pred.max()), int(gt.max()))
    out: dict[int | str, float] = {}
    for k in range(1, num_classes + 1):
        p = pred == k
        g = gt == k
        p_empty = not p.any()
        g_empty = not g.any()
        if p_empty and g_empty:
            out[k] = 100.0
            continue
        if p_empty or g_empty:
            out[k] = 0.0
            continue
        skel_p = skeletonize(p)
        skel_g = skeletonize(g)
        if not skel_p.any():
            skel_p = p
        if not skel_g.any():
            skel_g = g
        tprec = np.count_nonzero(skel_p & g) / np.count_nonzero(skel_p)
        tsens = np.count_nonzero(skel_g & p) / np.count_nonzero(skel_g)
        if tprec + tsens == 0.0:
            out[k] = 0.0
        else:
            out[k] = 100.0 * 2.0 * tprec * tsens / (tprec + tsens)
    out["macro"] = float(np.mean([out[k] for k in range(1, num_classes + 1)]))
    return out


def evaluate_masks(pred, gt, num_classes: int | None = None) -> MetricsReport:
    """Full metric report (overlap metrics plus clDice) for one mask pair."""
    pred = check_label_mask(pred, name="pred")
    gt = check_label_mask(gt, name="gt")
    if num_classes is None:
        num_classes = max(1, int(pred.max()), int(gt.max()))
    report = overlap_metrics(confusion(pred, gt, num_classes))
    cl = cl_dice(pred, gt, num_classes)
    for k in range(1, num_classes + 1):
        report.per_class[k]["cldice"] = cl[k]
    report.macro["cldice"] = cl["macro"]
    # keep a stable metric ordering in each row
    for k in report.per_class:
        report.per_class[k] = {name: report.per_class[k][name] for name in METRIC_NAMES}
    report.macro = {name: report.macro[name] for name in METRIC_NAMES}
    return report
