"""Segmentation reductions and performance metrics.

Reduces a probability stack to a segmentation (mean softmax followed by
argmax) and scores predictions against labels: per-class and mean Dice,
pixel accuracy, and the inverse-frequency-weighted categorical
cross-entropy used as the evaluation loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import (
    PROB_SUM_TOLERANCE,
    BundleValidationError,
    ClassSpec,
    LabelMap,
    ProbabilityStack,
)

__all__ = [
    "LabelMap",
    "MeanProbabilityMap",
    "SegmentationMap",
    "ClassWeights",
    "DiceReport",
    "MissingClassError",
    "mean_probability",
    "argmax_segmentation",
    "dice_report",
    "class_weights",
    "weighted_cross_entropy",
]

LOG_CLAMP_EPS = 1e-12


class MissingClassError(ValueError):
    """A class required to be present in training labels never occurs."""


@dataclass
class MeanProbabilityMap:
    """C x H x W per-pixel class distribution, averaged over T passes."""

    values: np.ndarray  # (C, H, W) float64

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] < 2:
            raise ValueError(f"mean probability map needs shape (C>=2,H,W), got {arr.shape}")
        self.values = arr

    def violations(self) -> list[str]:
        out = []
        if not np.isfinite(self.values).all():
            out.append("mean probabilities contain non-finite values")
        elif ((self.values < 0) | (self.values > 1)).any():
            out.append("mean probabilities outside [0,1]")
        else:
            sums = self.values.sum(axis=0)
            if (np.abs(sums - 1.0) > PROB_SUM_TOLERANCE).any():
                out.append(
                    f"per-pixel class sums deviate from 1 by more than {PROB_SUM_TOLERANCE}"
                )
        return out

    def __eq__(self, other):
        if not isinstance(other, MeanProbabilityMap):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass
class SegmentationMap:
    """H x W predicted class indices plus a note of how they were derived."""

    values: np.ndarray  # (H, W) uint8
    source: str = "argmax(mean_probability)"

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise ValueError(f"segmentation map needs shape (H,W), got {arr.shape}")
        self.values = arr.astype(np.uint8)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, SegmentationMap):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass
class ClassWeights:
    """Per-class loss weights, normalized so the pixel-frequency-weighted
    mean weight equals 1."""

    w: np.ndarray  # (C,) float64, all > 0

    def __post_init__(self):
        arr = np.asarray(self.w, dtype=np.float64)
        if arr.ndim != 1 or not np.isfinite(arr).all() or (arr <= 0).any():
            raise ValueError("class weights must be a 1-D array of finite positives")
        self.w = arr

    def __eq__(self, other):
        if not isinstance(other, ClassWeights):
            return NotImplemented
        return np.array_equal(self.w, other.w)


@dataclass
class DiceReport:
    """Per-class Dice, their arithmetic mean, and pixel accuracy for one image."""

    per_class: np.ndarray  # (C,) float64 in [0,1]
    mean_dice: float
    pixel_accuracy: float

    def __eq__(self, other):
        if not isinstance(other, DiceReport):
            return NotImplemented
        return (
            np.array_equal(self.per_class, other.per_class)
            and self.mean_dice == other.mean_dice
            and self.pixel_accuracy == other.pixel_accuracy
        )


def mean_probability(stack: ProbabilityStack) -> MeanProbabilityMap:
    """Element-wise arithmetic mean of the T softmax passes."""
    return MeanProbabilityMap(stack.values.astype(np.float64).mean(axis=0))


def argmax_segmentation(pmap: MeanProbabilityMap) -> SegmentationMap:
    """Per pixel, the smallest class index attaining the maximum probability."""
    return SegmentationMap(np.argmax(pmap.values, axis=0).astype(np.uint8))


def _check_dims(pred: SegmentationMap, label: LabelMap):
    if pred.shape != label.shape:
        raise ValueError(
            f"dimension mismatch: prediction {pred.shape} vs label {label.shape}"
        )


def dice_report(pred: SegmentationMap, label: LabelMap, spec: ClassSpec) -> DiceReport:
    """Per-class Dice 2|A&B| / (|A|+|B|), mean Dice over all C classes,
    and pixel accuracy.

    A class occurring in neither prediction nor label scores 1.0 (perfect
    agreement on absence); a false positive against an empty label, or a
    miss of a present label, drives that class toward 0.
    """
    _check_dims(pred, label)
    c = spec.num_classes
    p = pred.values.ravel().astype(np.int64)
    g = label.values.ravel().astype(np.int64)
    if g.max(initial=0) >= c or p.max(initial=0) >= c:
        raise ValueError(f"class index out of range for num_classes={c}")
    pred_counts = np.bincount(p, minlength=c)[:c]
    label_counts = np.bincount(g, minlength=c)[:c]
    inter = np.bincount(p[p == g], minlength=c)[:c]
    denom = pred_counts + label_counts
    per_class = np.where(denom > 0, 2.0 * inter / np.maximum(denom, 1), 1.0)
    accuracy = float(np.mean(p == g))
    return DiceReport(
        per_class=per_class,
        mean_dice=float(per_class.mean()),
        pixel_accuracy=accuracy,
    )


def class_weights(training_labels: list[LabelMap], spec: ClassSpec) -> ClassWeights:
    """Inverse-occurrence class weights w_c = N_total / (C * N_c).

    Every class must occur at least once across the training labels;
    an absent class raises :class:`MissingClassError` naming it.
    """
    if not training_labels:
        raise ValueError("at least one training label is required")
    c = spec.num_classes
    counts = np.zeros(c, dtype=np.int64)
    for lab in training_labels:
        counts += np.bincount(lab.values.ravel(), minlength=c)[:c]
    absent = np.flatnonzero(counts == 0)
    if absent.size:
        names = ", ".join(
            f"{i} ({spec.class_names[i]})" for i in absent.tolist()
        )
        raise MissingClassError(f"class(es) absent from training labels: {names}")
    total = counts.sum()
    return ClassWeights(total / (c * counts.astype(np.float64)))


def weighted_cross_entropy(
    pmap: MeanProbabilityMap, label: LabelMap, weights: ClassWeights
) -> float:
    """Weighted categorical cross-entropy
    L = -(1/N) sum_i sum_c w_c g_ic log p_ic, probabilities clamped to
    [1e-12, 1] before the log."""
    c, h, w = pmap.values.shape
    if label.shape != (h, w):
        raise ValueError(
            f"dimension mismatch: probability map ({h},{w}) vs label {label.shape}"
        )
    if weights.w.shape[0] != c:
        raise ValueError(f"expected {c} class weights, got {weights.w.shape[0]}")
    if label.values.max(initial=0) >= c:
        raise BundleValidationError(
            [f"label: value >= num_classes {c}"]
        )
    idx = label.values.astype(np.int64)
    p_true = np.take_along_axis(pmap.values, idx[None, :, :], axis=0)[0]
    p_true = np.clip(p_true, LOG_CLAMP_EPS, 1.0)
    w_pix = weights.w[idx]
    return float(-(w_pix * np.log(p_true)).sum() / (h * w))
