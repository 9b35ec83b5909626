"""2-D mask morphology: binarize, Zhang-Suen thinning, dilation, tubed skeletons.

The tubed-skeleton transform reduces a label mask to the skeleton of its
foreground union, thickens the skeleton by dilation, and re-applies the
original labels so every surviving pixel keeps its class.  The "no-ts"
variant skips the final masking step, so the thickened skeleton may escape
the original foreground.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import check_binary_mask, check_label_mask

SE_SHAPES = ("square", "disk")


@dataclass(frozen=True)
class StructuringElement:
    """Dilation footprint: a square or a euclidean disk of integer radius."""

    shape: str = "square"
    radius: int = 1

    def __post_init__(self):
        if self.shape not in SE_SHAPES:
            raise ValueError(f"structuring element shape must be one of {SE_SHAPES}, got {self.shape!r}")
        if not isinstance(self.radius, (int, np.integer)) or self.radius < 1:
            raise ValueError(f"structuring element radius must be an integer >= 1, got {self.radius!r}")

    def footprint(self) -> np.ndarray:
        """Boolean (2r+1, 2r+1) footprint centered on the origin."""
        r = self.radius
        if self.shape == "square":
            return np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
        dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
        return dy * dy + dx * dx <= r * r

    @classmethod
    def parse(cls, text: str) -> "StructuringElement":
        """Parse the CLI notation ``shape:radius``, e.g. ``square:1``."""
        parts = text.split(":")
        if len(parts) != 2:
            raise ValueError(f"expected SHAPE:RADIUS, got {text!r}")
        shape, radius_text = parts
        try:
            radius = int(radius_text)
        except ValueError:
            raise ValueError(f"structuring element radius must be an integer, got {radius_text!r}") from None
        return cls(shape=shape, radius=radius)

    def spec(self) -> str:
        return f"{self.shape}:{self.radius}"


def binarize(labels) -> np.ndarray:
    """Foreground indicator: True wherever the label is nonzero."""
    arr = check_label_mask(labels)
    return arr > 0


def _thinning_pass(img: np.ndarray, step: int) -> bool:
    """One Zhang-Suen sub-iteration on a zero-padded uint8 image, in place.

    Deletions are decided from a snapshot of the current image and applied
    simultaneously (parallel thinning).  Returns True if any pixel changed.
    """
    core = img[1:-1, 1:-1]
    p2 = img[:-2, 1:-1]
    p3 = img[:-2, 2:]
    p4 = img[1:-1, 2:]
    p5 = img[2:, 2:]
    p6 = img[2:, 1:-1]
    p7 = img[2:, :-2]
    p8 = img[1:-1, :-2]
    p9 = img[:-2, :-2]

    ring = (p2, p3, p4, p5, p6, p7, p8, p9)
    b = np.zeros(core.shape, dtype=np.int8)
    for p in ring:
        b += p
    # 0 -> 1 transitions around the closed ring p2, p3, ..., p9, p2
    a = np.zeros(core.shape, dtype=np.int8)
    for p, q in zip(ring, ring[1:] + ring[:1]):
        a += (p == 0) & (q == 1)

    cond = (core == 1) & (b >= 2) & (b <= 6) & (a == 1)
    if step == 0:
        cond &= (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
    else:
        cond &= (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
    if not cond.any():
        return False
    core[cond] = 0
    return True


def skeletonize(mask) -> np.ndarray:
    """Thin a binary mask to its skeleton with Zhang-Suen iterative thinning.

    8-connectivity; the image is padded with a zero border so foreground
    touching the frame is thinned like any other pixel.  The skeleton is a
    subset of the input.  Elongated components thin to connected unit-width
    curves; isolated 2x2 blocks are deleted outright (a known quirk of the
    parallel deletion rule).
    """
    bits = check_binary_mask(mask)
    img = np.zeros((bits.shape[0] + 2, bits.shape[1] + 2), dtype=np.uint8)
    img[1:-1, 1:-1] = bits
    changed = True
    while changed:
        changed = _thinning_pass(img, 0)
        changed |= _thinning_pass(img, 1)
    return img[1:-1, 1:-1].astype(bool)


def dilate(mask, se: StructuringElement = StructuringElement()) -> np.ndarray:
    """Binary dilation: a pixel turns on iff the footprint centered on it
    covers an input foreground pixel.  The footprint is clipped at borders.
    """
    bits = check_binary_mask(mask)
    return ndimage.binary_dilation(bits, structure=se.footprint())


def tubed_skeletonize(labels, se: StructuringElement = StructuringElement()) -> np.ndarray:
    """Skeletonize the foreground union, dilate, and mask by the input labels.

    The result keeps the original class label wherever the dilated skeleton
    meets the input foreground and is zero elsewhere, so it nests between
    the raw skeleton and the original foreground.
    """
    arr = check_label_mask(labels)
    band = dilate(skeletonize(arr > 0), se)
    return np.where(band, arr, 0)


def skeletonize_no_ts(labels, se: StructuringElement = StructuringElement()) -> np.ndarray:
    """Dilated skeleton without re-masking by the ground truth.

    The foreground equals ``dilate(skeletonize(labels > 0))`` and may escape
    the input foreground.  Pixels over input foreground keep its label;
    pixels that escaped get label 1 (for binary masks this is the obvious
    definition; for multiclass there is no underlying label to copy).
    """
    arr = check_label_mask(labels)
    band = dilate(skeletonize(arr > 0), se)
    return np.where(band, np.where(arr > 0, arr, 1), 0)


class TubedSkeletonizer(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping label masks to (tubed) skeleton masks.

    Parameters
    ----------
    se_shape, se_radius : footprint of the dilation step.
    multiply_by_gt : when True apply the final ground-truth masking step;
        when False produce the unmasked dilated skeleton.
    """

    def __init__(self, se_shape: str = "square", se_radius: int = 1, multiply_by_gt: bool = True):
        self.se_shape = se_shape
        self.se_radius = se_radius
        self.multiply_by_gt = multiply_by_gt

    def fit(self, X=None, y=None):
        """No-op; present so the transformer slots into pipelines."""
        self._se()  # validate parameters eagerly
        return self

    def _se(self) -> StructuringElement:
        return StructuringElement(shape=self.se_shape, radius=self.se_radius)

    def transform(self, X):
        """Transform one 2-D label mask, a 3-D stack, or an iterable of masks."""
        se = self._se()
        op = tubed_skeletonize if self.multiply_by_gt else skeletonize_no_ts
        if isinstance(X, np.ndarray):
            if X.ndim == 2:
                return op(X, se)
            if X.ndim == 3:
                return np.stack([op(m, se) for m in X])
            raise ValueError(f"expected 2-D mask or 3-D stack of masks, got shape {X.shape}")
        return [op(m, se) for m in X]
