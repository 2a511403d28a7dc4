"""Synthetic geometric dataset for the toy U-Net.

Self-contained shapes-on-canvas data so the whole pipeline runs without
any external imagery: each class renders as a distinct (noisy) color
family, which a small network learns in a couple of epochs. Real datasets
(a directory of image/label raster pairs) can be dropped in instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLASS_NAMES = ("background", "disk", "box", "band")

# Mean RGB per class; pixel noise is added on top.
_CLASS_COLORS = np.array(
    [
        [40, 40, 48],
        [200, 60, 60],
        [60, 190, 70],
        [70, 90, 210],
    ],
    dtype=np.float64,
)


@dataclass
class Sample:
    image: np.ndarray  # (H, W, 3) uint8
    label: np.ndarray  # (H, W) uint8


def _render(label: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    colors = _CLASS_COLORS[label]
    noisy = colors + rng.normal(0.0, 18.0, size=colors.shape)
    return np.clip(noisy, 0, 255).astype(np.uint8)


def make_sample(size: int, rng: np.random.Generator) -> Sample:
    """One image: a disk, a box, and a horizontal band on background."""
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w]
    label = np.zeros((h, w), dtype=np.uint8)

    band_top = int(rng.integers(0, h - h // 6))
    label[band_top : band_top + h // 6, :] = 3

    bx, by = int(rng.integers(0, w - w // 4)), int(rng.integers(0, h - h // 4))
    label[by : by + h // 4, bx : bx + w // 4] = 2

    cy, cx = rng.uniform(0.2 * h, 0.8 * h), rng.uniform(0.2 * w, 0.8 * w)
    r = rng.uniform(0.12 * h, 0.22 * h)
    label[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = 1

    return Sample(image=_render(label, rng), label=label)


def make_dataset(count: int, size: int, seed: int) -> list[Sample]:
    rng = np.random.default_rng(seed)
    return [make_sample(size, rng) for _ in range(count)]
