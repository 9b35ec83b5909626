"""File formats: PGM label masks and the SLPM float-field container.

PGM: P2 (ASCII) and P5 (binary) are both read; writes default to P5.
Label value equals pixel value and the header maxval carries the class
count, so a write/read round trip reproduces a mask exactly.

SLPM: raw little-endian float32 container for channel-major fields, with
a 16-byte header of magic b"SLPM" followed by width, height and channel
count as unsigned 32-bit integers.  Data follows channel-major then
row-major, i.e. the C order of a (channels, height, width) array.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .validation import check_label_mask, check_prob_map

SLPM_MAGIC = b"SLPM"


def write_pgm(path, labels, maxval: int | None = None, plain: bool = False) -> None:
    """Write a label mask as PGM; ``maxval`` defaults to max(1, labels.max())."""
    arr = check_label_mask(labels)
    if maxval is None:
        maxval = max(1, int(arr.max()))
    if not 1 <= maxval <= 65535:
        raise ValueError(f"PGM maxval must lie in [1, 65535], got {maxval}")
    if int(arr.max()) > maxval:
        raise ValueError(f"mask value {int(arr.max())} exceeds maxval {maxval}")
    h, w = arr.shape
    header = f"{'P2' if plain else 'P5'}\n{w} {h}\n{maxval}\n"
    path = Path(path)
    if plain:
        body = "\n".join(" ".join(str(v) for v in row) for row in arr.tolist())
        path.write_text(header + body + "\n", encoding="ascii")
        return
    dtype = np.uint8 if maxval < 256 else ">u2"
    path.write_bytes(header.encode("ascii") + arr.astype(dtype).tobytes())


def _pgm_tokens(data: bytes):
    """Yield whitespace-separated header tokens, skipping # comments."""
    pos = 0
    while pos < len(data):
        c = data[pos : pos + 1]
        if c.isspace():
            pos += 1
            continue
        if c == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        yield data[pos:end], end
        pos = end


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a P2 or P5 PGM; returns (labels int64 (H, W), maxval)."""
    data = Path(path).read_bytes()
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
        if magic not in (b"P2", b"P5"):
            raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
        (w_tok, _), (h_tok, _), (max_tok, header_end) = next(tokens), next(tokens), next(tokens)
    except StopIteration:
        raise ValueError(f"{path}: truncated PGM header") from None
    w, h, maxval = int(w_tok), int(h_tok), int(max_tok)
    if w <= 0 or h <= 0 or maxval <= 0:
        raise ValueError(f"{path}: invalid PGM dimensions {w}x{h} maxval {maxval}")
    if magic == b"P2":
        values = [int(t) for t, _ in tokens]
        if len(values) != w * h:
            raise ValueError(f"{path}: expected {w * h} pixels, found {len(values)}")
        arr = np.array(values, dtype=np.int64).reshape(h, w)
    else:
        dtype = np.uint8 if maxval < 256 else ">u2"
        itemsize = np.dtype(dtype).itemsize
        start = header_end + 1  # single whitespace byte after maxval
        raw = data[start : start + w * h * itemsize]
        if len(raw) != w * h * itemsize:
            raise ValueError(f"{path}: truncated PGM pixel data")
        arr = np.frombuffer(raw, dtype=dtype).astype(np.int64).reshape(h, w)
    if int(arr.max(initial=0)) > maxval:
        raise ValueError(f"{path}: pixel value exceeds declared maxval {maxval}")
    return arr, maxval


def write_slpm(path, values) -> None:
    """Write a (channels, height, width) float field as SLPM."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"SLPM stores (channels, height, width) fields, got shape {arr.shape}")
    c, h, w = arr.shape
    header = SLPM_MAGIC + struct.pack("<III", w, h, c)
    Path(path).write_bytes(header + arr.astype("<f4").tobytes(order="C"))


def read_slpm(path) -> np.ndarray:
    """Read an SLPM field back as float64 (channels, height, width)."""
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != SLPM_MAGIC:
        raise ValueError(f"{path}: not an SLPM file")
    w, h, c = struct.unpack("<III", data[4:16])
    expected = 16 + 4 * w * h * c
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for {c}x{h}x{w}, got {len(data)}")
    return np.frombuffer(data[16:], dtype="<f4").astype(np.float64).reshape(c, h, w)


def write_prob_map(path, values) -> None:
    """Validate a probability field and write it as SLPM."""
    write_slpm(path, check_prob_map(values))


def read_prob_map(path) -> np.ndarray:
    """Read an SLPM file and validate it as a probability field."""
    return check_prob_map(read_slpm(path), name=str(path))


def write_weights(path, weights) -> None:
    """Model weights container: magic b"SLW0", u32 channels, u32 features, float64 data."""
    arr = np.asarray(weights, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"weights must be (channels, features), got shape {arr.shape}")
    header = b"SLW0" + struct.pack("<II", arr.shape[0], arr.shape[1])
    Path(path).write_bytes(header + arr.astype("<f8").tobytes(order="C"))


def read_weights(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"SLW0":
        raise ValueError(f"{path}: not a weights file")
    c, f = struct.unpack("<II", data[4:12])
    expected = 12 + 8 * c * f
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for {c}x{f} weights, got {len(data)}")
    return np.frombuffer(data[12:], dtype="<f8").reshape(c, f).copy()
