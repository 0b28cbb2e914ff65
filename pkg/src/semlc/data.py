"""Dataset ingestion and deterministic synthetic corpora.

Real data comes in as raw IDX files (MNIST layout) or CIFAR-10 binary
batches. The synthetic generators exist so the desk-scale experiments and
tests run without any files on disk: stroke-rendered digits for the order
experiments, two-class blob images for learnability smoke tests. All
images are float64 in [0, 1] with shape (N, C, H, W); labels are int64.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 1 + 3 * 32 * 32


def load_idx(path) -> np.ndarray:
    """Read one IDX file (big-endian header, raw ubyte payload)."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated IDX header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic == IDX_IMAGES_MAGIC:
        ndim = 3
    elif magic == IDX_LABELS_MAGIC:
        ndim = 1
    else:
        raise DataFormatError(f"{path}: unexpected IDX magic 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated IDX dimension block")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) != header + count:
        raise DataFormatError(
            f"{path}: payload holds {len(raw) - header} bytes, header promises {count}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_mnist(images_path, labels_path, limit: int | None = None):
    """MNIST-style pair of IDX files -> (images (N,1,H,W) in [0,1], labels)."""
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if images.ndim != 3:
        raise DataFormatError(f"{images_path}: expected an image IDX file")
    if labels.ndim != 1:
        raise DataFormatError(f"{labels_path}: expected a label IDX file")
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"image count {images.shape[0]} != label count {labels.shape[0]}"
        )
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    x = images.astype(np.float64)[:, None] / 255.0
    return x, labels.astype(np.int64)


def load_cifar10(paths):
    """CIFAR-10 binary batches -> (images (N,3,32,32) in [0,1], labels).

    Each record is 1 label byte followed by 3072 pixel bytes in row-major
    R, G, B planes.
    """
    images = []
    labels = []
    for path in paths:
        raw = Path(path).read_bytes()
        if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES != 0:
            raise DataFormatError(
                f"{path}: size {len(raw)} is not a multiple of {CIFAR_RECORD_BYTES}"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels.append(records[:, 0].astype(np.int64))
        images.append(records[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0)
    return np.concatenate(images), np.concatenate(labels)


# ----------------------------------------------------------------------
# synthetic corpora

# Stroke endpoints per digit in a unit box (x right, y down). Roughly a
# seven-segment skeleton with diagonals where the glyph calls for them.
_T, _B, _L, _R, _M = 0.18, 0.82, 0.22, 0.78, 0.5
_DIGIT_STROKES = {
    0: [((_L, _T), (_R, _T)), ((_R, _T), (_R, _B)), ((_R, _B), (_L, _B)), ((_L, _B), (_L, _T))],
    1: [((0.38, 0.32), (_M, _T)), ((_M, _T), (_M, _B))],
    2: [((_L, _T), (_R, _T)), ((_R, _T), (_R, _M)), ((_R, _M), (_L, _B)), ((_L, _B), (_R, _B))],
    3: [((_L, _T), (_R, _T)), ((_R, _T), (_R, _B)), ((0.42, _M), (_R, _M)), ((_L, _B), (_R, _B))],
    4: [((_L, _T), (_L, _M)), ((_L, _M), (_R, _M)), ((0.65, _T), (0.65, _B))],
    5: [((_R, _T), (_L, _T)), ((_L, _T), (_L, _M)), ((_L, _M), (_R, _M)), ((_R, _M), (_R, _B)), ((_R, _B), (_L, _B))],
    6: [((_R, _T), (_L, _M)), ((_L, _M), (_L, _B)), ((_L, _B), (_R, _B)), ((_R, _B), (_R, _M)), ((_R, _M), (_L, _M))],
    7: [((_L, _T), (_R, _T)), ((_R, _T), (0.4, _B))],
    8: [((_L, _T), (_R, _T)), ((_R, _T), (_R, _B)), ((_R, _B), (_L, _B)), ((_L, _B), (_L, _T)), ((_L, _M), (_R, _M))],
    9: [((_R, _M), (_L, _M)), ((_L, _M), (_L, _T)), ((_L, _T), (_R, _T)), ((_R, _T), (_R, _B)), ((_R, _B), (0.35, _B))],
}


def _render_strokes(segments, size: int, stroke_width: float) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    points = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
    intensity = np.zeros(size * size)
    for (ax, ay), (bx, by) in segments:
        a = np.array([ax, ay])
        b = np.array([bx, by])
        ab = b - a
        denom = float(ab @ ab)
        if denom < 1e-12:
            proj = np.zeros(len(points))
        else:
            proj = np.clip((points - a) @ ab / denom, 0.0, 1.0)
        nearest = a + proj[:, None] * ab
        dist2 = ((points - nearest) ** 2).sum(axis=1)
        intensity = np.maximum(intensity, np.exp(-dist2 / (2.0 * stroke_width**2)))
    return intensity.reshape(size, size)


def synthetic_digits(count: int, seed: int, size: int = 28):
    """Deterministic stroke-rendered digit corpus, 10 classes.

    Each sample draws a digit skeleton with a random rotation, scale, and
    shift, rasterized with a soft pen, plus mild pixel noise. Stands in for
    handwritten digits when no IDX files are available.
    """
    rng = np.random.default_rng(seed)
    images = np.empty((count, 1, size, size))
    labels = rng.integers(0, 10, size=count).astype(np.int64)
    for n in range(count):
        angle = rng.uniform(-0.28, 0.28)
        scale = rng.uniform(0.75, 1.05) * size
        shift = rng.uniform(-0.1, 0.1, size=2) * size + (size - 1) / 2.0
        cos_a, sin_a = np.cos(angle), np.sin(angle)
        segments = []
        for (ax, ay), (bx, by) in _DIGIT_STROKES[int(labels[n])]:
            pts = []
            for px, py in ((ax, ay), (bx, by)):
                cx, cy = px - 0.5, py - 0.5
                pts.append(
                    (
                        (cos_a * cx - sin_a * cy) * scale + shift[0],
                        (sin_a * cx + cos_a * cy) * scale + shift[1],
                    )
                )
            segments.append(tuple(pts))
        img = _render_strokes(segments, size, stroke_width=0.045 * size)
        img += rng.normal(0.0, 0.04, size=img.shape)
        images[n, 0] = np.clip(img, 0.0, 1.0)
    return images, labels


def synthetic_blobs(count: int, seed: int, size: int = 8):
    """Two-class blob images: class 0 lights up the top-left quadrant,
    class 1 the bottom-right. Trivially learnable by a tiny net."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=count).astype(np.int64)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    images = np.empty((count, 1, size, size))
    for n in range(count):
        base = size * (0.28 if labels[n] == 0 else 0.72)
        cx = base + rng.normal(0.0, 0.05 * size)
        cy = base + rng.normal(0.0, 0.05 * size)
        blob = np.exp(-(((xs - cx) ** 2 + (ys - cy) ** 2)) / (2.0 * (0.16 * size) ** 2))
        images[n, 0] = np.clip(blob + rng.normal(0.0, 0.05, size=blob.shape), 0.0, 1.0)
    return images, labels
