"""Deterministic synthetic datasets: thin tubular strokes and elliptic blobs.

Every sample is generated from its own PCG64 stream seeded with
(dataset seed, sample index), so sample i is byte-identical no matter
how many samples surround it or in which order they are produced.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import read_pgm, write_pgm
from .validation import check_label_mask

KINDS = ("tubular", "blobs")

# entropy tag for the split permutation stream; outside any sample index
_SPLIT_STREAM = 2**32


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of one synthetic dataset."""

    kind: str = "tubular"
    count: int = 80
    size: int = 64
    shapes_per_image: int = 3
    width_range: tuple[int, int] = (1, 4)
    noise_sigma: float = 0.12
    contrast: float = 0.6
    seed: int = 0
    num_classes: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if self.size < 32:
            raise ValueError(f"size must be >= 32, got {self.size}")
        if self.shapes_per_image < 1:
            raise ValueError(f"shapes_per_image must be >= 1, got {self.shapes_per_image}")
        lo, hi = self.width_range
        if not 1 <= lo <= hi:
            raise ValueError(f"width_range must satisfy 1 <= lo <= hi, got {self.width_range}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 < self.contrast <= 1:
            raise ValueError(f"contrast must lie in (0, 1], got {self.contrast}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")


@dataclass(frozen=True)
class SynthSample:
    """One image with its ground-truth label mask."""

    image: np.ndarray  # (H, W) float64 in [0, 1]
    gt: np.ndarray  # (H, W) int64
    index: int


def _round_half_up(x):
    return np.floor(np.asarray(x) + 0.5).astype(np.int64)


def _disk_offsets(width: int) -> np.ndarray:
    """Integer offsets of a stamped disk of the given diameter.

    Width 1 covers exactly one pixel, width 2 a plus shape, and so on;
    the test is dy^2 + dx^2 <= (width / 2)^2.
    """
    r = width / 2.0
    span = np.arange(-int(math.ceil(r)), int(math.ceil(r)) + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    keep = dy * dy + dx * dx <= r * r
    return np.stack([dy[keep], dx[keep]], axis=1)


def _stamp(gt, centers, width, label):
    offsets = _disk_offsets(width)
    pts = centers[:, None, :] + offsets[None, :, :]
    pts = pts.reshape(-1, 2)
    h, w = gt.shape
    ok = (pts[:, 0] >= 0) & (pts[:, 0] < h) & (pts[:, 1] >= 0) & (pts[:, 1] < w)
    pts = pts[ok]
    gt[pts[:, 0], pts[:, 1]] = label


def _draw_stroke(gt, rng, cfg: SynthConfig) -> None:
    """Rasterize one quadratic Bezier stroke into the label mask."""
    size = cfg.size
    margin = cfg.width_range[1] / 2.0 + 1.0
    lo, hi = margin, size - 1 - margin
    p0 = rng.uniform(lo, hi, size=2)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    length = rng.uniform(0.35, 0.6) * size
    p2 = p0 + length * np.array([math.sin(angle), math.cos(angle)])
    p2 = np.clip(p2, lo, hi)
    bend = rng.uniform(-0.15, 0.15, size=2) * size
    p1 = np.clip((p0 + p2) / 2.0 + bend, lo, hi)
    width = int(rng.integers(cfg.width_range[0], cfg.width_range[1] + 1))
    label = int(rng.integers(1, cfg.num_classes + 1))

    # sample density tied to the control polygon length, an upper bound on
    # arc length, so consecutive samples sit well under a pixel apart
    poly_len = np.linalg.norm(p1 - p0) + np.linalg.norm(p2 - p1)
    n = max(2, int(math.ceil(8.0 * poly_len)))
    t = np.linspace(0.0, 1.0, n)[:, None]
    pts = (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t**2 * p2
    _stamp(gt, _round_half_up(pts), width, label)


def _draw_blob(gt, rng, cfg: SynthConfig) -> None:
    """Rasterize one axis-aligned filled ellipse into the label mask."""
    size = cfg.size
    margin = 2.0
    center = rng.uniform(margin, size - 1 - margin, size=2)
    semi = rng.uniform(2.0, size / 10.0, size=2)
    label = int(rng.integers(1, cfg.num_classes + 1))
    yy, xx = np.ogrid[:size, :size]
    inside = ((yy - center[0]) / semi[0]) ** 2 + ((xx - center[1]) / semi[1]) ** 2 <= 1.0
    gt[inside] = label


def generate_sample(cfg: SynthConfig, index: int) -> SynthSample:
    """Generate sample ``index`` of the dataset described by ``cfg``."""
    if not 0 <= index < cfg.count:
        raise ValueError(f"sample index {index} outside [0, {cfg.count})")
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, index)))
    gt = np.zeros((cfg.size, cfg.size), dtype=np.int64)
    draw = _draw_stroke if cfg.kind == "tubular" else _draw_blob
    for _ in range(cfg.shapes_per_image):
        draw(gt, rng, cfg)
    image = cfg.contrast * (gt > 0).astype(np.float64)
    if cfg.noise_sigma > 0:
        image = image + rng.normal(0.0, cfg.noise_sigma, size=gt.shape)
    image = np.clip(image, 0.0, 1.0)
    return SynthSample(image=image, gt=gt, index=index)


def generate(cfg: SynthConfig) -> list[SynthSample]:
    return [generate_sample(cfg, i) for i in range(cfg.count)]


def split(samples, train_fraction: float, seed: int) -> tuple[list, list]:
    """Shuffle deterministically and cut into (train, test)."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(samples)
    n_train = int(math.floor(train_fraction * n + 0.5))
    if n_train == 0 or n_train == n:
        raise ValueError(f"split of {n} samples at {train_fraction} leaves one side empty")
    rng = np.random.default_rng(np.random.SeedSequence((seed, _SPLIT_STREAM)))
    perm = rng.permutation(n)
    train = [samples[i] for i in perm[:n_train]]
    test = [samples[i] for i in perm[n_train:]]
    return train, test


def foreground_fraction(gt) -> float:
    arr = check_label_mask(gt)
    return float(np.count_nonzero(arr)) / arr.size


def save_dataset(samples, directory, cfg: SynthConfig | None = None) -> None:
    """Write image_NNN.pgm / gt_NNN.pgm pairs plus a manifest.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    gt_maxval = max(1, max(int(s.gt.max()) for s in samples))
    names = []
    for s in samples:
        img_name, gt_name = f"image_{s.index:03d}.pgm", f"gt_{s.index:03d}.pgm"
        write_pgm(directory / img_name, _round_half_up(s.image * 255.0), maxval=255)
        write_pgm(directory / gt_name, s.gt, maxval=gt_maxval)
        names.append({"index": s.index, "image": img_name, "gt": gt_name})
    manifest = {"count": len(samples), "samples": names}
    if cfg is not None:
        manifest["config"] = dataclasses.asdict(cfg)
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="ascii"
    )


def load_dataset(directory) -> list[SynthSample]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="ascii"))
    samples = []
    for entry in manifest["samples"]:
        image_raw, maxval = read_pgm(directory / entry["image"])
        gt, _ = read_pgm(directory / entry["gt"])
        samples.append(
            SynthSample(
                image=image_raw.astype(np.float64) / maxval,
                gt=gt,
                index=int(entry["index"]),
            )
        )
    return samples
