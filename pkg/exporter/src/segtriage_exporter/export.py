"""MC-dropout inference and bundle export.

Runs T stochastic forward passes per image with dropout active and packs
the per-pass softmax outputs, the label, and the source image into .ubnd
files that the scoring CLI and the review service consume unchanged.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from segtriage.bundle import Bundle, LabelMap, ProbabilityStack, write_bundle

from .data import Sample
from .model import ToyDropoutUnet, enable_mc_dropout
from .train import class_spec


def mc_probability_stack(
    model: ToyDropoutUnet, image: np.ndarray, passes: int, stochastic: bool = True
) -> np.ndarray:
    """(T, C, H, W) float32 softmax stack for one image.

    ``stochastic=False`` runs plain eval passes (dropout off), in which
    case all T passes are identical.
    """
    if stochastic:
        enable_mc_dropout(model)
    else:
        model.eval()
    x = (
        torch.from_numpy(image.astype(np.float32) / 255.0)
        .permute(2, 0, 1)
        .unsqueeze(0)
    )
    outputs = []
    with torch.no_grad():
        for _ in range(passes):
            outputs.append(model.predict_proba(x)[0].numpy().astype(np.float64))
    stack = np.stack(outputs)
    # exact renormalization before the float32 cast keeps stored sums
    # comfortably inside the bundle tolerance
    stack /= stack.sum(axis=1, keepdims=True)
    return stack.astype(np.float32)


def export_bundles(
    model: ToyDropoutUnet,
    samples: list[Sample],
    passes: int,
    out_dir: str | Path,
    seed: int = 0,
) -> dict:
    """Export one .ubnd per sample plus a manifest; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(seed)
    spec = class_spec()
    images = []
    for i, sample in enumerate(samples):
        stack = mc_probability_stack(model, sample.image, passes)
        bundle = Bundle(
            image_id=f"unet-{seed}-{i:04d}",
            class_spec=spec,
            probabilities=ProbabilityStack(stack),
            label=LabelMap(sample.label),
            source_image=sample.image,
            meta={"exporter": "segtriage-exporter", "passes": str(passes)},
        )
        fname = f"image-{i:04d}.ubnd"
        with open(out / fname, "wb") as fh:
            write_bundle(bundle, fh)
        images.append({"file": fname, "image_id": bundle.image_id})
    manifest = {
        "format": "segtriage-exporter-manifest",
        "format_version": 1,
        "passes": passes,
        "class_names": list(spec.class_names),
        "images": images,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
