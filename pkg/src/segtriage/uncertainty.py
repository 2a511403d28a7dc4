"""Entropy-based uncertainty measures.

Per-pixel Shannon entropy of the mean class distribution, aggregated two
ways: the mean entropy over each predicted-class region (defined from
predictions alone, so it works without ground truth) and the mean over
the whole image.

Natural logarithm throughout; entropy therefore lives in [0, ln C].
Correlation and regression results downstream are invariant to the base,
which only rescales every uncertainty by a constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .bundle import ClassSpec
from .metrics import MeanProbabilityMap, SegmentationMap

__all__ = [
    "UncertaintyMap",
    "ClassUncertaintyVector",
    "entropy_map",
    "class_uncertainties",
    "image_mean_entropy",
    "entropy_to_grayscale",
]


@dataclass
class UncertaintyMap:
    """H x W per-pixel entropies, each in [0, ln C]."""

    values: np.ndarray  # (H, W) float64

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"uncertainty map needs shape (H,W), got {arr.shape}")
        self.values = arr

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, UncertaintyMap):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class ClassUncertaintyVector:
    """Mean pixel entropy per predicted class, with region sizes.

    ``u[c]`` is None exactly when class c was never predicted
    (``pixel_counts[c] == 0``); the mean of an empty region is undefined
    and downstream consumers decide imputation explicitly.
    """

    u: tuple[float | None, ...]
    pixel_counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.u) != len(self.pixel_counts):
            raise ValueError("u and pixel_counts must have equal length")
        for c, (val, cnt) in enumerate(zip(self.u, self.pixel_counts)):
            if cnt < 0:
                raise ValueError(f"pixel_counts[{c}] negative")
            if (val is None) != (cnt == 0):
                raise ValueError(
                    f"u[{c}] must be None exactly when pixel_counts[{c}] is 0"
                )
            if val is not None and not (val >= 0 and math.isfinite(val)):
                raise ValueError(f"u[{c}] must be a finite non-negative value")

    @property
    def num_classes(self) -> int:
        return len(self.u)

    def present(self) -> list[int]:
        """Indices of classes that actually occur in the prediction."""
        return [c for c, val in enumerate(self.u) if val is not None]


def entropy_map(pmap: MeanProbabilityMap) -> UncertaintyMap:
    """H(p_i) = -sum_c p_ic ln p_ic with 0 ln 0 := 0.

    Each pixel's distribution is renormalized by its sum first, so the
    [0, ln C] bound holds exactly even at the edge of the stored
    probability-sum tolerance.
    """
    p = pmap.values
    sums = p.sum(axis=0, keepdims=True)
    if (sums <= 0).any():
        raise ValueError("pixel with zero total probability mass")
    p = p / sums
    h = -xlogy(p, p).sum(axis=0)
    # -0.0 from exactly one-hot pixels
    return UncertaintyMap(np.maximum(h, 0.0))


def class_uncertainties(
    umap: UncertaintyMap, seg: SegmentationMap, spec: ClassSpec
) -> ClassUncertaintyVector:
    """Mean entropy over each predicted-class region.

    Uses predictions only, so the measure is available with no ground
    truth. Classes with no predicted pixels are marked absent.
    """
    if umap.shape != seg.shape:
        raise ValueError(
            f"dimension mismatch: uncertainty map {umap.shape} vs segmentation {seg.shape}"
        )
    c = spec.num_classes
    flat = seg.values.ravel().astype(np.int64)
    if flat.max(initial=0) >= c:
        raise ValueError(f"segmentation contains class index >= {c}")
    counts = np.bincount(flat, minlength=c)[:c]
    sums = np.bincount(flat, weights=umap.values.ravel(), minlength=c)[:c]
    u = tuple(
        float(sums[i] / counts[i]) if counts[i] else None for i in range(c)
    )
    return ClassUncertaintyVector(u=u, pixel_counts=tuple(int(n) for n in counts))


def image_mean_entropy(umap: UncertaintyMap) -> float:
    """Arithmetic mean entropy over all H*W pixels."""
    return float(umap.values.mean())


def entropy_to_grayscale(umap: UncertaintyMap, num_classes: int) -> np.ndarray:
    """8-bit grayscale rendering of an entropy map, scaled by 255 / ln C.

    Brighter pixels are more uncertain.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    scaled = umap.values * (255.0 / math.log(num_classes))
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
