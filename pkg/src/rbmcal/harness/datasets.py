"""Training data: bars-and-stripes, binary-vector files and coarse-grained images."""

from __future__ import annotations

import itertools
import logging
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


def generate_bars_and_stripes(rows: int, cols: int) -> np.ndarray:
    """All distinct row-constant or column-constant ``rows x cols`` images, flattened row-major.

    There are ``2**rows + 2**cols - 2`` of them: the blank and full images are
    both row- and column-constant and appear once.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    patterns = []
    seen = set()
    for bits in itertools.product((0, 1), repeat=rows):
        img = np.repeat(np.array(bits, dtype=np.uint8)[:, None], cols, axis=1)
        patterns.append(img)
    for bits in itertools.product((0, 1), repeat=cols):
        img = np.repeat(np.array(bits, dtype=np.uint8)[None, :], rows, axis=0)
        patterns.append(img)
    out = []
    for img in patterns:
        key = img.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(img.ravel())
    return np.array(out, dtype=np.uint8)


def ingest_binary_vectors(path) -> np.ndarray:
    """Read one '0'/'1' string per line; blank lines are skipped."""
    rows = []
    width = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        bad = set(line) - {"0", "1"}
        if bad:
            raise ValueError(f"{path}:{lineno}: non-binary characters {sorted(bad)}")
        if width is None:
            width = len(line)
        elif len(line) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} bits, found {len(line)}")
        rows.append([int(ch) for ch in line])
    if not rows:
        logger.warning("%s contains no vectors", path)
        return np.zeros((0, 0), dtype=np.uint8)
    return np.array(rows, dtype=np.uint8)


def write_binary_vectors(data, path) -> None:
    data = np.asarray(data, dtype=np.uint8)
    Path(path).write_text("".join("".join("01"[x] for x in row) + "\n" for row in data))


def coarse_grain(images: np.ndarray, target_shape: tuple[int, int], threshold: float = 0.5) -> np.ndarray:
    """Average-pool grey images in [0, 1] to ``target_shape`` and binarize.

    ``images`` has shape ``[k, H, W]``; H and W must be multiples of the
    target sides.  Pixels with pooled intensity >= ``threshold`` become 1.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3:
        raise ValueError("images must have shape [count, height, width]")
    k, height, width = images.shape
    th, tw = target_shape
    if height % th or width % tw:
        raise ValueError(f"image size {height}x{width} is not divisible into {th}x{tw} blocks")
    pooled = images.reshape(k, th, height // th, tw, width // tw).mean(axis=(2, 4))
    return (pooled >= threshold).astype(np.uint8).reshape(k, th * tw)


def load_coarse_grained_images(path, target_shape: tuple[int, int], threshold: float = 0.5) -> np.ndarray:
    """Load a ``.npy`` stack of images (uint8 0-255 or floats in [0, 1]) and coarse-grain it."""
    images = np.load(path)
    if images.dtype == np.uint8:
        images = images / 255.0
    return coarse_grain(images, target_shape, threshold)


def load_dataset(spec: dict) -> np.ndarray:
    """Build a dataset from a ``{"kind": ..., ...}`` mapping."""
    kind = spec.get("kind", "bars_and_stripes")
    if kind == "bars_and_stripes":
        return generate_bars_and_stripes(int(spec["rows"]), int(spec["cols"]))
    if kind == "file":
        return ingest_binary_vectors(spec["path"])
    if kind == "coarse_grained_images":
        shape = tuple(int(x) for x in spec["target_shape"])
        return load_coarse_grained_images(spec["path"], shape, float(spec.get("threshold", 0.5)))
    raise ValueError(f"unknown dataset kind {kind!r}")
