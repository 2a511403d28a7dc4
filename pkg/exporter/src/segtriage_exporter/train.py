"""Training loop: weighted cross-entropy with L2 regularization."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from segtriage.bundle import ClassSpec, LabelMap
from segtriage.metrics import class_weights

from .data import CLASS_NAMES, Sample, make_dataset
from .model import ToyDropoutUnet


@dataclass(frozen=True)
class ExporterConfig:
    dataset_dir: str | None = None  # None -> synthetic shapes
    num_images: int = 24
    image_size: int = 32
    passes: int = 5
    dropout: float = 0.5
    epochs: int = 3
    learning_rate: float = 1e-3
    l2_alpha: float = 0.01
    base_channels: int = 8
    seed: int = 0
    output_dir: str = "exported"

    def __post_init__(self):
        if self.passes < 1:
            raise ValueError("passes must be >= 1")
        if not 0.0 < self.dropout < 1.0:
            raise ValueError("dropout rate must be in (0, 1)")
        if self.image_size % 4 != 0:
            raise ValueError("image_size must be divisible by 4 (two poolings)")


def class_spec() -> ClassSpec:
    return ClassSpec(
        num_classes=len(CLASS_NAMES), class_names=CLASS_NAMES, background_index=0
    )


def _to_tensors(samples: list[Sample]) -> tuple[torch.Tensor, torch.Tensor]:
    images = torch.stack(
        [torch.from_numpy(s.image.astype(np.float32) / 255.0).permute(2, 0, 1) for s in samples]
    )
    labels = torch.stack([torch.from_numpy(s.label.astype(np.int64)) for s in samples])
    return images, labels


def train_toy_unet(
    config: ExporterConfig, samples: list[Sample] | None = None
) -> tuple[ToyDropoutUnet, list[Sample]]:
    """Train the toy network; returns (model, training samples)."""
    torch.manual_seed(config.seed)
    if samples is None:
        samples = make_dataset(config.num_images, config.image_size, config.seed)
    spec = class_spec()
    weights = class_weights([LabelMap(s.label) for s in samples], spec)
    model = ToyDropoutUnet(
        spec.num_classes, base=config.base_channels, dropout=config.dropout
    )
    criterion = nn.CrossEntropyLoss(
        weight=torch.from_numpy(weights.w.astype(np.float32))
    )
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.learning_rate, weight_decay=config.l2_alpha
    )
    images, labels = _to_tensors(samples)
    model.train()
    batch = 4
    for _ in range(config.epochs):
        perm = torch.randperm(len(samples))
        for start in range(0, len(samples), batch):
            idx = perm[start : start + batch]
            optimizer.zero_grad()
            loss = criterion(model(images[idx]), labels[idx])
            loss.backward()
            optimizer.step()
    return model, samples


def save_checkpoint(model: ToyDropoutUnet, config: ExporterConfig, path: str | Path):
    torch.save(
        {
            "state_dict": model.state_dict(),
            "num_classes": model.num_classes,
            "base_channels": config.base_channels,
            "dropout": config.dropout,
        },
        path,
    )


def load_checkpoint(path: str | Path) -> ToyDropoutUnet:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    model = ToyDropoutUnet(
        blob["num_classes"], base=blob["base_channels"], dropout=blob["dropout"]
    )
    model.load_state_dict(blob["state_dict"])
    return model
