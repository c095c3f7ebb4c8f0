"""Deterministic handwritten-digit stand-in data at 28x28.

Digits are rendered from parametric stroke skeletons with per-sample
random affine warps, point wobble, and stroke-width variation, then
written as gzipped IDX pairs. Set IEA_MNIST_DIR to a directory holding
the four standard MNIST files to use the real dataset instead.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

TRAIN_N = 5000
TEST_N = 1000
CANVAS = 28
SEED = 20260818

STANDARD_NAMES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def real_mnist_paths() -> dict[str, Path] | None:
    root = os.environ.get("IEA_MNIST_DIR")
    if not root:
        return None
    out = {}
    for key, name in STANDARD_NAMES.items():
        for cand in (Path(root) / name, Path(root) / (name + ".gz")):
            if cand.is_file():
                out[key] = cand
                break
        else:
            return None
    return out


def _seg(a, b, n=40):
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - t) * np.asarray(a, dtype=np.float64) + t * np.asarray(b, dtype=np.float64)


def _arc(cx, cy, rx, ry, a0, a1, n=60):
    t = np.linspace(np.radians(a0), np.radians(a1), n)
    return np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)


# stroke skeletons per digit, in [0,1]^2 glyph coordinates (y grows downward)
GLYPHS = {
    0: [_arc(0.5, 0.5, 0.32, 0.42, 0, 360)],
    1: [_seg((0.35, 0.25), (0.55, 0.08)), _seg((0.55, 0.08), (0.55, 0.92))],
    2: [_arc(0.5, 0.3, 0.3, 0.22, 180, 360), _seg((0.8, 0.3), (0.2, 0.9)),
        _seg((0.2, 0.9), (0.82, 0.9))],
    3: [_arc(0.48, 0.3, 0.28, 0.21, 150, 380), _arc(0.48, 0.72, 0.32, 0.24, 340, 570)],
    4: [_seg((0.62, 0.08), (0.18, 0.62)), _seg((0.18, 0.62), (0.85, 0.62)),
        _seg((0.62, 0.08), (0.62, 0.92))],
    5: [_seg((0.75, 0.1), (0.28, 0.1)), _seg((0.28, 0.1), (0.25, 0.48)),
        _arc(0.5, 0.65, 0.3, 0.26, 230, 480)],
    6: [_arc(0.52, 0.67, 0.28, 0.25, 0, 360), _arc(0.62, 0.4, 0.45, 0.55, 195, 275)],
    7: [_seg((0.18, 0.1), (0.82, 0.1)), _seg((0.82, 0.1), (0.42, 0.92))],
    8: [_arc(0.5, 0.3, 0.24, 0.2, 0, 360), _arc(0.5, 0.72, 0.3, 0.23, 0, 360)],
    9: [_arc(0.48, 0.35, 0.26, 0.24, 0, 360), _arc(0.4, 0.6, 0.45, 0.5, 285, 360)],
}


def render_digit(digit: int, rng: np.random.Generator, side: int = CANVAS) -> np.ndarray:
    """One warped glyph image in [0,1], shape (side, side)."""
    pts = np.concatenate(GLYPHS[digit], axis=0)
    pts = pts + rng.normal(0.0, 0.012, pts.shape)
    ang = rng.uniform(-0.13, 0.13)
    shear = rng.uniform(-0.10, 0.10)
    sx, sy = rng.uniform(0.88, 1.12, 2)
    ca, sa = np.cos(ang), np.sin(ang)
    warp = np.array([[ca, -sa], [sa, ca]]) @ np.array([[sx, shear * sx], [0.0, sy]])
    pts = (pts - pts.mean(axis=0)) @ warp.T + 0.5
    box = 20.0
    off = (side - box) / 2.0
    xy = pts * box + off + rng.uniform(-1.5, 1.5, 2)
    img = np.zeros((side, side))
    rad = rng.uniform(0.95, 1.25)
    ii, jj = np.mgrid[0:side, 0:side]
    for x, y in xy:
        d2 = (jj - x) ** 2 + (ii - y) ** 2
        np.maximum(img, np.exp(-d2 / (2.0 * rad * rad)), out=img)
    peak = img.max()
    if peak > 0:
        img /= peak
    return np.clip(img, 0.0, 1.0)


def _make_split(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    # balanced labels in shuffled order
    labels = rng.permutation(np.tile(np.arange(10), (n + 9) // 10)[:n])
    images = np.zeros((n, 1, CANVAS, CANVAS), dtype=np.float64)
    for i in range(n):
        images[i, 0] = render_digit(int(labels[i]), rng)
    return images, labels.astype(np.int64)


def build_surrogate(out_dir) -> dict[str, Path]:
    """Render TRAIN_N + TEST_N digits and write gzipped IDX pairs."""
    from ieanet.data import Dataset, write_idx

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    train_images, train_labels = _make_split(TRAIN_N, rng)
    test_images, test_labels = _make_split(TEST_N, rng)
    paths = {key: out_dir / (name + ".gz") for key, name in STANDARD_NAMES.items()}
    write_idx(Dataset(train_images, train_labels),
              paths["train_images"], paths["train_labels"], compress=True)
    write_idx(Dataset(test_images, test_labels),
              paths["test_images"], paths["test_labels"], compress=True)
    return paths


def ensure_digit_idx(cache_dir) -> dict[str, Path]:
    """Return IDX paths: real MNIST if IEA_MNIST_DIR is set, else cached surrogate."""
    real = real_mnist_paths()
    if real is not None:
        return real
    cache_dir = Path(cache_dir)
    paths = {key: cache_dir / (name + ".gz") for key, name in STANDARD_NAMES.items()}
    if all(p.is_file() for p in paths.values()):
        return paths
    return build_surrogate(cache_dir)


if __name__ == "__main__":
    import argparse

    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    for key, path in sorted(build_surrogate(args.out).items()):
        print(f"{key}: {path}")
