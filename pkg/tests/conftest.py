"""Shared fixtures: synthetic digit IDX files and optional real MNIST.

The synthetic set renders seven-segment-style glyphs for the ten digit
classes with per-sample segment dropout, intensity jitter, shifts and
background noise, then packs them into genuine IDX containers.  It
stands in for MNIST wherever the real files are unavailable (tests that
need the actual dataset skip with a pointer to scripts/fetch_mnist.py).
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np
import pytest

from superacc.mlp import load_mnist_idx
from superacc.rng import SplitMix64

SEGMENTS = {
    "A": (0, 0, 0, 11),
    "B": (0, 11, 9, 11),
    "C": (10, 11, 19, 11),
    "D": (19, 0, 19, 11),
    "E": (10, 0, 19, 0),
    "F": (0, 0, 9, 0),
    "G": (9, 0, 9, 11),
}
DIGIT_SEGMENTS = {
    0: "ABCDEF",
    1: "BC",
    2: "ABGED",
    3: "ABGCD",
    4: "FGBC",
    5: "AFGCD",
    6: "AFGECD",
    7: "ABC",
    8: "ABCDEFG",
    9: "ABCDFG",
}


def _glyph(digit: int) -> np.ndarray:
    img = np.zeros((20, 12))
    for seg in DIGIT_SEGMENTS[digit]:
        r0, c0, r1, c1 = SEGMENTS[seg]
        img[min(r0, r1) : max(r0, r1) + 1, min(c0, c1) : max(c0, c1) + 1] = 1.0
        if r0 == r1 and r0 + 1 < 20:
            img[r0 + 1, min(c0, c1) : max(c0, c1) + 1] = 1.0
        if c0 == c1 and c0 + 1 < 12:
            img[min(r0, r1) : max(r0, r1) + 1, c0 + 1] = 1.0
    return img


def make_digit_images(n: int, seed: int, drop: float = 0.15, noise: float = 0.3):
    """(images uint8 (n,28,28), digits uint8 (n,)) — deterministic."""
    rng = SplitMix64(seed)
    images = np.zeros((n, 28, 28), dtype=np.uint8)
    digits = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        d = rng.randbelow(10)
        g = _glyph(d)
        keep = np.array(
            [[rng.random() > drop for _ in range(12)] for _ in range(20)]
        )
        g = g * keep
        intensity = 0.5 + 0.5 * rng.random()
        dy = rng.randbelow(9) - 4
        dx = rng.randbelow(9) - 4
        canvas = np.zeros((28, 28))
        canvas[4 + dy : 24 + dy, 8 + dx : 20 + dx] = g * intensity
        bg = np.array(
            [[noise * rng.random() for _ in range(28)] for _ in range(28)]
        )
        canvas = np.clip(canvas + bg, 0.0, 1.0)
        images[i] = np.round(canvas * 255).astype(np.uint8)
        digits[i] = d
    return images, digits


def write_idx_images(path, images: np.ndarray) -> None:
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">iiii", 0x00000803, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, digits: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack(">ii", 0x00000801, len(digits)))
        fh.write(digits.astype(np.uint8).tobytes())


@pytest.fixture(scope="session")
def digits_dir(tmp_path_factory) -> Path:
    """Directory with IDX files for the synthetic digit set (5000/1000)."""
    root = tmp_path_factory.mktemp("digits_idx")
    tr_img, tr_lab = make_digit_images(5000, seed=11)
    te_img, te_lab = make_digit_images(1000, seed=12)
    write_idx_images(root / "train-images-idx3-ubyte", tr_img)
    write_idx_labels(root / "train-labels-idx1-ubyte", tr_lab)
    write_idx_images(root / "t10k-images-idx3-ubyte", te_img)
    write_idx_labels(root / "t10k-labels-idx1-ubyte", te_lab)
    return root


@pytest.fixture(scope="session")
def digits_data(digits_dir):
    """(train, test) LabeledDatasets loaded through the IDX parser."""
    train = load_mnist_idx(
        digits_dir / "train-images-idx3-ubyte", digits_dir / "train-labels-idx1-ubyte"
    )
    test = load_mnist_idx(
        digits_dir / "t10k-images-idx3-ubyte", digits_dir / "t10k-labels-idx1-ubyte"
    )
    return train, test


def find_real_mnist() -> Path | None:
    """Locate the four real MNIST IDX files, if present."""
    candidates = []
    if os.environ.get("MNIST_DIR"):
        candidates.append(Path(os.environ["MNIST_DIR"]))
    candidates.append(Path(__file__).resolve().parent.parent / "data" / "mnist")
    names = [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ]
    for cand in candidates:
        if all((cand / n).exists() for n in names):
            return cand
    return None


@pytest.fixture(scope="session")
def real_mnist_dir() -> Path:
    path = find_real_mnist()
    if path is None:
        pytest.skip(
            "real MNIST IDX files not found (set MNIST_DIR or run "
            "scripts/fetch_mnist.py data/mnist)"
        )
    return path
