"""Event-sourced triage store.

All state is a pure fold over an append-only ``events.jsonl``: ingest and
decide events carry every derived feature they need (uncertainties, true
Dice), so replay never touches the raw bundles. Bundles and corrected
labels live content-addressed under ``blobs/``. A single writer lock
serializes mutations; reads are served from the in-memory fold.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..bundle import Bundle, LabelMap, read_bundle
from ..metrics import argmax_segmentation, dice_report, mean_probability
from ..scoring import score_bundle
from ..statmodel import (
    InsufficientDataError,
    QualityModel,
    clamp_unit,
    fit_quality_model,
    model_from_json,
    model_to_json,
    predict_quality,
)
from ..uncertainty import ClassUncertaintyVector

__all__ = ["TriageStore", "QueueItem", "StoreError", "ConflictError", "UnknownItemError"]

PENDING = "pending"
ACCEPTED = "accepted"
ANNOTATED = "annotated"
ACTIONS = {"accept": ACCEPTED, "annotate": ANNOTATED}


class StoreError(Exception):
    pass


class ConflictError(StoreError):
    """Duplicate image_id on ingest, or a decision on a non-pending item."""


class UnknownItemError(StoreError):
    pass


@dataclass
class QueueItem:
    item_id: str
    image_id: str
    status: str
    ingest_seq: int
    dims: tuple[int, int, int, int]  # (T, C, H, W)
    class_names: tuple[str, ...]
    background_index: int
    blob_sha256: str
    uncertainties: ClassUncertaintyVector
    mean_entropy: float
    true_mean_dice: float | None
    predicted_mean_dice: float | None = None
    decided_by: str | None = None
    decided_at: str | None = None
    corrected_label_sha256: str | None = None

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "image_id": self.image_id,
            "status": self.status,
            "dims": list(self.dims),
            "class_names": list(self.class_names),
            "background_index": self.background_index,
            "blob_sha256": self.blob_sha256,
            "class_uncertainties": [
                None if v is None else v for v in self.uncertainties.u
            ],
            "pixel_counts": list(self.uncertainties.pixel_counts),
            "mean_entropy": self.mean_entropy,
            "true_mean_dice": self.true_mean_dice,
            "predicted_mean_dice": self.predicted_mean_dice,
            "predicted_mean_dice_clamped": (
                None
                if self.predicted_mean_dice is None
                else clamp_unit(self.predicted_mean_dice)
            ),
            "decided_by": self.decided_by,
            "decided_at": self.decided_at,
            "corrected_label_sha256": self.corrected_label_sha256,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class TriageStore:
    """Filesystem-backed triage queue; restart-safe by construction."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.blobs_dir = self.data_dir / "blobs"
        self.events_path = self.data_dir / "events.jsonl"
        self.blobs_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._items: dict[str, QueueItem] = {}
        self._by_image_id: dict[str, str] = {}
        self._model: QualityModel | None = None
        self._model_version: int = 0
        self._seq = 0
        self._replay()

    # -- event log ------------------------------------------------------

    def _replay(self) -> None:
        if not self.events_path.exists():
            return
        with open(self.events_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self._apply(json.loads(line))
        self._rescore()

    def _append(self, event: dict) -> None:
        with open(self.events_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "ingest":
            item = QueueItem(
                item_id=event["item_id"],
                image_id=event["image_id"],
                status=PENDING,
                ingest_seq=event["seq"],
                dims=tuple(event["dims"]),
                class_names=tuple(event["class_names"]),
                background_index=event["background_index"],
                blob_sha256=event["blob_sha256"],
                uncertainties=ClassUncertaintyVector(
                    u=tuple(event["class_uncertainties"]),
                    pixel_counts=tuple(event["pixel_counts"]),
                ),
                mean_entropy=event["mean_entropy"],
                true_mean_dice=event["true_mean_dice"],
            )
            self._items[item.item_id] = item
            self._by_image_id[item.image_id] = item.item_id
            self._seq = max(self._seq, event["seq"])
        elif kind == "decide":
            item = self._items[event["item_id"]]
            item.status = ACTIONS[event["action"]]
            item.decided_by = event.get("decided_by")
            item.decided_at = event.get("decided_at")
            if event.get("corrected_label_sha256"):
                item.corrected_label_sha256 = event["corrected_label_sha256"]
            if event.get("true_mean_dice") is not None:
                item.true_mean_dice = event["true_mean_dice"]
        elif kind == "fit":
            self._model = model_from_json(json.dumps(event["model"]))
            self._model_version = event["model_version"]
        else:
            raise StoreError(f"unknown event type {kind!r}")

    def _rescore(self) -> None:
        for item in self._items.values():
            if self._model is not None and item.uncertainties.num_classes == (
                self._model.num_classes
            ):
                item.predicted_mean_dice = predict_quality(
                    self._model, item.uncertainties
                )
            else:
                item.predicted_mean_dice = None

    # -- blobs ----------------------------------------------------------

    def _store_blob(self, data: bytes, suffix: str) -> str:
        sha = hashlib.sha256(data).hexdigest()
        path = self.blobs_dir / f"{sha}{suffix}"
        if not path.exists():
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_bytes(data)
            tmp.replace(path)
        return sha

    def _load_bundle(self, item: QueueItem) -> Bundle:
        path = self.blobs_dir / f"{item.blob_sha256}.ubnd"
        with open(path, "rb") as fh:
            return read_bundle(fh)

    # -- operations -----------------------------------------------------

    def ingest(self, data: bytes) -> QueueItem:
        """Validate, persist, score, and enqueue one bundle."""
        bundle = read_bundle(io.BytesIO(data))  # raises BundleError on bad input
        with self._lock:
            if bundle.image_id in self._by_image_id:
                raise ConflictError(
                    f"image_id {bundle.image_id!r} already ingested as "
                    f"{self._by_image_id[bundle.image_id]}"
                )
            score = score_bundle(bundle)
            sha = self._store_blob(data, ".ubnd")
            self._seq += 1
            item_id = f"item-{self._seq:06d}"
            event = {
                "type": "ingest",
                "seq": self._seq,
                "item_id": item_id,
                "image_id": bundle.image_id,
                "dims": list(bundle.dims),
                "class_names": list(bundle.class_spec.class_names),
                "background_index": bundle.class_spec.background_index,
                "blob_sha256": sha,
                "class_uncertainties": [
                    None if v is None else v for v in score.uncertainties.u
                ],
                "pixel_counts": list(score.uncertainties.pixel_counts),
                "mean_entropy": score.mean_entropy,
                "true_mean_dice": score.mean_dice,
                "ts": _now(),
            }
            self._append(event)
            self._apply(event)
            item = self._items[item_id]
            if self._model is not None:
                item.predicted_mean_dice = predict_quality(
                    self._model, item.uncertainties
                )
            return item

    def queue(self, limit: int | None = None) -> list[QueueItem]:
        """Pending items, worst predicted quality first.

        Scored items ascend by predicted mean Dice; unscored items come
        last in ingestion order; ties break on item_id.
        """
        with self._lock:
            pending = [i for i in self._items.values() if i.status == PENDING]
            pending.sort(
                key=lambda i: (
                    (0, i.predicted_mean_dice, i.item_id)
                    if i.predicted_mean_dice is not None
                    else (1, i.ingest_seq, i.item_id)
                )
            )
            return pending[:limit] if limit is not None else pending

    def item(self, item_id: str) -> QueueItem:
        with self._lock:
            if item_id not in self._items:
                raise UnknownItemError(f"unknown item {item_id!r}")
            return self._items[item_id]

    def decide(
        self,
        item_id: str,
        action: str,
        label_bytes: bytes | None = None,
        decided_by: str | None = None,
    ) -> QueueItem:
        """Record a human decision; optionally attach a corrected label.

        A corrected label (raw H*W bytes, row-major) becomes the item's
        ground truth: its mean Dice against the stored prediction is
        computed here and enters future fits.
        """
        if action not in ACTIONS:
            raise StoreError(f"unknown action {action!r}")
        with self._lock:
            if item_id not in self._items:
                raise UnknownItemError(f"unknown item {item_id!r}")
            item = self._items[item_id]
            if item.status != PENDING:
                raise ConflictError(f"item {item_id} is {item.status}, not pending")
            event: dict = {
                "type": "decide",
                "item_id": item_id,
                "action": action,
                "decided_by": decided_by or "reviewer",
                "decided_at": _now(),
            }
            if label_bytes is not None:
                t, c, h, w = item.dims
                if len(label_bytes) != h * w:
                    raise StoreError(
                        f"corrected label has {len(label_bytes)} bytes, "
                        f"expected H*W={h * w}"
                    )
                label_arr = np.frombuffer(label_bytes, dtype=np.uint8).reshape(h, w)
                if label_arr.max(initial=0) >= c:
                    raise StoreError(
                        f"corrected label contains class index >= {c}"
                    )
                bundle = self._load_bundle(item)
                seg = argmax_segmentation(mean_probability(bundle.probabilities))
                report = dice_report(
                    seg, LabelMap(label_arr.copy()), bundle.class_spec
                )
                event["corrected_label_sha256"] = self._store_blob(
                    label_bytes, ".label"
                )
                event["true_mean_dice"] = report.mean_dice
            self._append(event)
            self._apply(event)
            return item

    def fit(self, alpha: float = 0.05) -> QualityModel:
        """Fit the quality model on every labeled item and rescore."""
        with self._lock:
            labeled = [
                (i.uncertainties, i.true_mean_dice)
                for i in sorted(self._items.values(), key=lambda x: x.ingest_seq)
                if i.true_mean_dice is not None
            ]
            if not labeled:
                raise InsufficientDataError("no labeled items to fit on")
            num_classes = labeled[0][0].num_classes
            minimum = num_classes + 2
            if len(labeled) < minimum:
                raise InsufficientDataError(
                    f"need at least {minimum} labeled items "
                    f"({num_classes} predictors + 2), got {len(labeled)}"
                )
            model = fit_quality_model(labeled, alpha=alpha)
            event = {
                "type": "fit",
                "model": json.loads(model_to_json(model)),
                "model_version": self._model_version + 1,
                "alpha": alpha,
                "n_labeled": len(labeled),
                "ts": _now(),
            }
            self._append(event)
            self._apply(event)
            self._rescore()
            return model

    @property
    def model(self) -> QualityModel | None:
        return self._model

    @property
    def model_version(self) -> int:
        return self._model_version

    def metrics(self) -> dict:
        with self._lock:
            items = list(self._items.values())
            by_status = {s: 0 for s in (PENDING, ACCEPTED, ANNOTATED)}
            for i in items:
                by_status[i.status] += 1
            pending = [i for i in items if i.status == PENDING]
            pred = [
                i.predicted_mean_dice
                for i in pending
                if i.predicted_mean_dice is not None
            ]
            true = [i.true_mean_dice for i in pending if i.true_mean_dice is not None]
            return {
                "total": len(items),
                "by_status": by_status,
                "model_version": self._model_version,
                "model_r_squared": (
                    None if self._model is None else self._model.r_squared
                ),
                "pending_mean_predicted_dice": (
                    float(np.mean(pred)) if pred else None
                ),
                "pending_mean_true_dice": float(np.mean(true)) if true else None,
            }

    def snapshot(self) -> dict:
        """Full state dump; replay of the same event log reproduces it."""
        with self._lock:
            return {
                "items": {
                    iid: item.to_dict() for iid, item in sorted(self._items.items())
                },
                "model_version": self._model_version,
                "model": (
                    None
                    if self._model is None
                    else json.loads(model_to_json(self._model))
                ),
            }

    def load_bundle(self, item_id: str) -> Bundle:
        with self._lock:
            if item_id not in self._items:
                raise UnknownItemError(f"unknown item {item_id!r}")
            item = self._items[item_id]
        return self._load_bundle(item)

    @staticmethod
    def decode_label_base64(payload: str) -> bytes:
        try:
            return base64.b64decode(payload, validate=True)
        except Exception as exc:
            raise StoreError(f"label_base64 is not valid base64: {exc}") from exc
