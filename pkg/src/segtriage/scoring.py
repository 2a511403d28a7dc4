"""Per-image scoring and the score-file interchange format.

A score file is the handoff between the heavy per-image stage (bundles ->
uncertainties and metrics) and the statistical stages (correlation, fit,
simulation), so the latter never re-read probability stacks. It is a CSV
with a JSON sidecar carrying the class names and schema version.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bundle import Bundle
from .metrics import DiceReport, argmax_segmentation, dice_report, mean_probability
from .uncertainty import (
    ClassUncertaintyVector,
    class_uncertainties,
    entropy_map,
    image_mean_entropy,
)

__all__ = [
    "ImageScore",
    "score_bundle",
    "write_scores",
    "read_scores",
    "fit_corpus",
    "correlation_corpus",
]

SCORES_FORMAT = "segtriage-scores"
SCORES_FORMAT_VERSION = 1


@dataclass
class ImageScore:
    """Everything the statistical stages need about one image."""

    image_id: str
    mean_entropy: float
    uncertainties: ClassUncertaintyVector
    dice: DiceReport | None  # None when the bundle carries no label

    @property
    def mean_dice(self) -> float | None:
        return None if self.dice is None else self.dice.mean_dice


def score_bundle(bundle: Bundle) -> ImageScore:
    """Segment, measure uncertainty, and (when a label is present) score."""
    pmap = mean_probability(bundle.probabilities)
    seg = argmax_segmentation(pmap)
    umap = entropy_map(pmap)
    cu = class_uncertainties(umap, seg, bundle.class_spec)
    dice = (
        dice_report(seg, bundle.label, bundle.class_spec)
        if bundle.label is not None
        else None
    )
    return ImageScore(
        image_id=bundle.image_id,
        mean_entropy=image_mean_entropy(umap),
        uncertainties=cu,
        dice=dice,
    )


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def _columns(num_classes: int) -> list[str]:
    cols = ["image_id", "mean_entropy", "mean_dice", "pixel_accuracy"]
    for c in range(num_classes):
        cols += [f"u_{c}", f"count_{c}", f"dice_{c}"]
    return cols


def write_scores(
    scores: list[ImageScore], path: str | Path, class_names: list[str]
) -> None:
    """Write scores as CSV plus a JSON sidecar (``<name>.json``)."""
    path = Path(path)
    num_classes = len(class_names)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_columns(num_classes))
        for s in scores:
            if s.uncertainties.num_classes != num_classes:
                raise ValueError(
                    f"score for {s.image_id} has {s.uncertainties.num_classes} "
                    f"classes, expected {num_classes}"
                )
            row = [
                s.image_id,
                repr(s.mean_entropy),
                "" if s.dice is None else repr(s.dice.mean_dice),
                "" if s.dice is None else repr(s.dice.pixel_accuracy),
            ]
            for c in range(num_classes):
                u = s.uncertainties.u[c]
                row.append("" if u is None else repr(u))
                row.append(str(s.uncertainties.pixel_counts[c]))
                row.append(
                    "" if s.dice is None else repr(float(s.dice.per_class[c]))
                )
            writer.writerow(row)
    sidecar = {
        "format": SCORES_FORMAT,
        "format_version": SCORES_FORMAT_VERSION,
        "class_names": list(class_names),
        "columns": _columns(num_classes),
        "num_images": len(scores),
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_scores(path: str | Path) -> tuple[list[ImageScore], list[str]]:
    """Read a score file; returns (scores, class_names)."""
    path = Path(path)
    with open(_sidecar_path(path), encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if sidecar.get("format") != SCORES_FORMAT:
        raise ValueError(f"not a score sidecar: {sidecar.get('format')!r}")
    class_names = [str(n) for n in sidecar["class_names"]]
    num_classes = len(class_names)
    scores: list[ImageScore] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            u = []
            counts = []
            per_class = []
            for c in range(num_classes):
                raw_u = row[f"u_{c}"]
                u.append(None if raw_u == "" else float(raw_u))
                counts.append(int(row[f"count_{c}"]))
                raw_d = row[f"dice_{c}"]
                per_class.append(None if raw_d == "" else float(raw_d))
            has_dice = row["mean_dice"] != ""
            dice = None
            if has_dice:
                dice = DiceReport(
                    per_class=np.array([d for d in per_class], dtype=np.float64),
                    mean_dice=float(row["mean_dice"]),
                    pixel_accuracy=float(row["pixel_accuracy"]),
                )
            scores.append(
                ImageScore(
                    image_id=row["image_id"],
                    mean_entropy=float(row["mean_entropy"]),
                    uncertainties=ClassUncertaintyVector(
                        u=tuple(u), pixel_counts=tuple(counts)
                    ),
                    dice=dice,
                )
            )
    return scores, class_names


def fit_corpus(scores: list[ImageScore]) -> list[tuple[ClassUncertaintyVector, float]]:
    """(uncertainties, mean Dice) pairs for fitting; labeled images only."""
    return [
        (s.uncertainties, s.dice.mean_dice) for s in scores if s.dice is not None
    ]


def correlation_corpus(
    scores: list[ImageScore],
) -> list[tuple[ClassUncertaintyVector, DiceReport, float]]:
    """(uncertainties, Dice report, mean entropy) triples; labeled images only."""
    return [
        (s.uncertainties, s.dice, s.mean_entropy) for s in scores if s.dice is not None
    ]
