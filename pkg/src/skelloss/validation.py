"""Input validation helpers shared across the package.

Public entry points funnel their array arguments through these checkers so
that shape and value problems surface as uniform ``ValueError`` messages
instead of propagating as cryptic numpy failures.

Array conventions
-----------------
label mask   : 2-D integer array ``(height, width)``, 0 = background,
               1..K = foreground classes.
binary mask  : 2-D array of {0, 1}, returned as ``bool``.
probability  : 3-D float array ``(channels, height, width)``; channel 0 is
map            background, channels 1..K the foreground classes; per-pixel
               channel sums must be 1 within a small tolerance.
"""

from __future__ import annotations

import numpy as np

PROB_SUM_TOL = 1e-6


def check_label_mask(labels, num_classes: int | None = None, name: str = "labels") -> np.ndarray:
    """Validate a 2-D integer label grid and return it as int64.

    Values must lie in ``[0, num_classes]`` when ``num_classes`` is given,
    and must be non-negative integers otherwise.
    """
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D label grid, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name}: mask must contain at least one pixel")
    if not np.issubdtype(arr.dtype, np.integer):
        if np.issubdtype(arr.dtype, np.bool_):
            arr = arr.astype(np.int64)
        else:
            rounded = np.rint(arr)
            if not np.array_equal(rounded, arr):
                raise ValueError(f"{name}: labels must be integers, got dtype {arr.dtype}")
            arr = rounded
    arr = arr.astype(np.int64, copy=False)
    lo = int(arr.min())
    if lo < 0:
        raise ValueError(f"{name}: negative label {lo}")
    if num_classes is not None:
        hi = int(arr.max())
        if hi > num_classes:
            raise ValueError(f"{name}: label {hi} exceeds num_classes={num_classes}")
    return arr


def check_binary_mask(bits, name: str = "mask") -> np.ndarray:
    """Validate a 2-D {0,1} grid and return it as bool."""
    arr = np.asarray(bits)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D binary grid, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name}: mask must contain at least one pixel")
    if arr.dtype != np.bool_:
        uniq = np.unique(arr)
        if not np.isin(uniq, (0, 1)).all():
            raise ValueError(f"{name}: binary mask may only contain 0 and 1, got values {uniq[:8]}")
        arr = arr.astype(bool)
    return arr


def check_box_map(values, name: str = "pred") -> np.ndarray:
    """Validate a channel-major field of per-class scores in [0, 1].

    Shape ``(channels, height, width)`` with ``channels >= 2`` (background
    plus at least one foreground class) and finite entries in ``[0, 1]``.
    Unlike :func:`check_prob_map` the per-pixel channel sums are free; the
    losses are defined on this box so that finite differences can perturb
    one entry at a time without re-normalizing the simplex.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name}: expected (channels, height, width), got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise ValueError(f"{name}: need a background channel plus at least one class, got {arr.shape[0]} channels")
    if arr.shape[1] == 0 or arr.shape[2] == 0:
        raise ValueError(f"{name}: spatial dimensions must be nonzero, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name}: probabilities must be finite")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name}: probabilities must lie in [0, 1], got range [{arr.min()}, {arr.max()}]")
    return arr


def check_prob_map(values, tol: float = PROB_SUM_TOL, name: str = "pred") -> np.ndarray:
    """Validate a channel-major probability field and return it as float64.

    Everything :func:`check_box_map` checks, plus per-pixel channel sums
    of 1 within ``tol``.
    """
    arr = check_box_map(values, name=name)
    sums = arr.sum(axis=0)
    worst = float(np.abs(sums - 1.0).max())
    if worst > tol:
        raise ValueError(f"{name}: per-pixel channel sums deviate from 1 by {worst:.3g} (tol {tol:.3g})")
    return arr


def check_grad_field(values, name: str = "grad") -> np.ndarray:
    """Validate a gradient field: same layout as a probability map, finite."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name}: expected (channels, height, width), got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name}: gradient entries must be finite")
    return arr


def check_same_grid(a: np.ndarray, b: np.ndarray, name_a: str = "first", name_b: str = "second") -> None:
    """Require two arrays to share their trailing (height, width) dims."""
    if a.shape[-2:] != b.shape[-2:]:
        raise ValueError(
            f"dimension mismatch: {name_a} has spatial shape {a.shape[-2:]}, {name_b} has {b.shape[-2:]}"
        )
