"""Synthetic bundle corpora with controllable quality-uncertainty coupling.

Each generated image draws a target quality q, builds a label raster from
the chosen layout, corrupts a calibrated fraction of prediction pixels so
the realized mean Dice lands near q, and then emits a probability stack
whose entropy tracks the corruption: near-one-hot at correct pixels
(true-class mass in [0.9, 0.999]), near-uniform at corrupted ones.

``coupling`` interpolates between entropy that exactly tracks error (1.0)
and entropy decoupled from it (0.0); ``background_coupling`` optionally
overrides the coupling for the background class alone, mimicking corpora
where background uncertainty is uninformative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bundle import Bundle, ClassSpec, LabelMap, ProbabilityStack, write_bundle
from .metrics import SegmentationMap, dice_report

__all__ = ["GeneratorConfig", "generate_corpus", "write_corpus"]

LAYOUTS = ("stripes", "blobs")

# Style parameters for emitted softmax vectors.
_CERTAIN_LO, _CERTAIN_HI = 0.9, 0.999
_UNIFORMISH_CONCENTRATION = 5.0
# Share of pixels emitted uncertain-style when the style is decoupled
# from correctness.
_DECOUPLED_UNCERTAIN_RATE = 0.25
# Multiplier keeping the predicted class a strict argmax after float32
# rounding of near-uniform draws.
_ARGMAX_MARGIN = 1.02


@dataclass(frozen=True)
class GeneratorConfig:
    num_images: int
    passes: int = 5
    num_classes: int = 4
    height: int = 64
    width: int = 64
    layout: str = "blobs"
    quality_range: tuple[float, float] = (0.35, 0.95)
    coupling: float = 1.0
    noise_scale: float = 0.0
    seed: int = 0
    background_coupling: float | None = None
    background_index: int = 0

    def __post_init__(self):
        if self.num_images < 1:
            raise ValueError("num_images must be >= 1")
        if min(self.passes, self.height, self.width) < 1 or self.num_classes < 2:
            raise ValueError("dims must be positive with num_classes >= 2")
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}")
        lo, hi = self.quality_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError("quality_range must satisfy 0 <= lo <= hi <= 1")
        if not 0.0 <= self.coupling <= 1.0:
            raise ValueError("coupling must be in [0, 1]")
        if self.background_coupling is not None and not (
            0.0 <= self.background_coupling <= 1.0
        ):
            raise ValueError("background_coupling must be in [0, 1]")
        if self.noise_scale < 0.0:
            raise ValueError("noise_scale must be >= 0")
        if not 0 <= self.background_index < self.num_classes:
            raise ValueError("background_index out of range")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.passes, self.num_classes, self.height, self.width)

    def class_spec(self) -> ClassSpec:
        names = tuple(
            "background" if c == self.background_index else f"class_{c}"
            for c in range(self.num_classes)
        )
        return ClassSpec(
            num_classes=self.num_classes,
            class_names=names,
            background_index=self.background_index,
        )


def _stripe_label(config: GeneratorConfig) -> np.ndarray:
    """Horizontal bands, one per class: deterministic geometry with exact
    class frequencies whenever C divides H."""
    rows = np.minimum(
        (np.arange(config.height) * config.num_classes) // config.height,
        config.num_classes - 1,
    )
    return np.repeat(rows[:, None], config.width, axis=1).astype(np.uint8)


def _blob_label(config: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    """Random elliptical blobs of each non-background class on background.

    Redraws (deterministically, continuing the rng stream) until every
    class keeps at least one pixel, so per-class Dice has no empty-label
    edge cases.
    """
    h, w, c_n = config.height, config.width, config.num_classes
    yy, xx = np.mgrid[0:h, 0:w]
    foreground = [c for c in range(c_n) if c != config.background_index]
    for _ in range(50):
        label = np.full((h, w), config.background_index, dtype=np.uint8)
        for c in foreground:
            for _ in range(int(rng.integers(1, 4))):
                cy = rng.uniform(0, h)
                cx = rng.uniform(0, w)
                ry = rng.uniform(h / 16, h / 5) + 1.0
                rx = rng.uniform(w / 16, w / 5) + 1.0
                mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
                label[mask] = c
        if np.bincount(label.ravel(), minlength=c_n)[:c_n].min() > 0:
            return label
    raise RuntimeError("blob layout failed to place every class")


def _mean_dice_of(pred_flat: np.ndarray, label: LabelMap, spec: ClassSpec) -> float:
    seg = SegmentationMap(pred_flat.reshape(label.shape), source="synthetic")
    return dice_report(seg, label, spec).mean_dice


def _calibrated_prediction(
    label: LabelMap,
    spec: ClassSpec,
    target_q: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Corrupt label pixels until the mean Dice is as close to target_q as
    the per-pixel granularity allows.

    Corruption flips a prefix of a fixed pixel permutation to fixed wrong
    classes; mean Dice is non-increasing in the prefix length, so a
    bisection lands the realized quality within the corruption-step size.
    """
    flat_label = label.values.ravel().astype(np.int64)
    n = flat_label.size
    c_n = spec.num_classes
    wrong = (flat_label + rng.integers(1, c_n, size=n)) % c_n
    order = rng.permutation(n)

    def corrupted(k: int) -> np.ndarray:
        pred = flat_label.copy()
        idx = order[:k]
        pred[idx] = wrong[idx]
        return pred

    lo, hi = 0, n  # dice(lo) = 1 >= q; dice(hi) = floor
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _mean_dice_of(corrupted(mid), label, spec) >= target_q:
            lo = mid
        else:
            hi = mid
    d_lo = _mean_dice_of(corrupted(lo), label, spec)
    d_hi = _mean_dice_of(corrupted(hi), label, spec) if hi > lo else d_lo
    k = lo if abs(d_lo - target_q) <= abs(d_hi - target_q) else hi
    return corrupted(k).astype(np.uint8)


def _emit_stack(
    pred_flat: np.ndarray,
    corrupted_mask: np.ndarray,
    config: GeneratorConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Softmax passes (T, C, H, W) whose mean argmax reproduces pred_flat
    and whose entropy follows the style mask."""
    t_n, c_n, h, w = config.dims
    n = h * w

    coupling = np.full(n, config.coupling)
    if config.background_coupling is not None:
        coupling[pred_flat == config.background_index] = config.background_coupling
    follow = rng.random(n) < coupling
    decoupled = rng.random(n) < _DECOUPLED_UNCERTAIN_RATE
    uncertain = np.where(follow, corrupted_mask, decoupled)

    # Near-one-hot component: true-class mass in [0.9, 0.999], remainder
    # randomly split over the other classes.
    cols = np.arange(c_n)
    p_true = rng.uniform(_CERTAIN_LO, _CERTAIN_HI, size=(t_n, n, 1))
    split = rng.gamma(1.0, 1.0, size=(t_n, n, c_n))
    split[:, cols[None, :] == pred_flat[:, None]] = 0.0
    split_sums = split.sum(axis=2, keepdims=True)
    certain = split / split_sums * (1.0 - p_true)
    np.put_along_axis(
        certain, np.broadcast_to(pred_flat[None, :, None], (t_n, n, 1)), p_true, axis=2
    )

    # Near-uniform component: concentrated Dirichlet draw.
    unif = rng.gamma(_UNIFORMISH_CONCENTRATION, 1.0, size=(t_n, n, c_n))
    unif /= unif.sum(axis=2, keepdims=True)
    probs = np.where(uncertain[None, :, None], unif, certain)

    if config.noise_scale > 0.0:
        mix = config.noise_scale * rng.uniform(0.0, 1.0, size=(t_n, n, 1))
        ruffle = rng.gamma(1.0, 1.0, size=(t_n, n, c_n))
        ruffle /= ruffle.sum(axis=2, keepdims=True)
        probs = (1.0 - mix) * probs + mix * ruffle

    # Swap each pass's max onto the predicted class with a small margin so
    # the stored float32 mean still argmaxes to the prediction.
    target = np.broadcast_to(pred_flat[None, :, None], (t_n, n, 1))
    max_idx = probs.argmax(axis=2, keepdims=True)
    max_val = np.take_along_axis(probs, max_idx, axis=2)
    at_target = np.take_along_axis(probs, target, axis=2)
    np.put_along_axis(probs, max_idx, at_target, axis=2)
    np.put_along_axis(probs, target, max_val * _ARGMAX_MARGIN, axis=2)
    probs /= probs.sum(axis=2, keepdims=True)

    return probs.transpose(0, 2, 1).reshape(t_n, c_n, h, w).astype(np.float32)


def _generate_one(
    config: GeneratorConfig, index: int, rng: np.random.Generator
) -> Bundle:
    spec = config.class_spec()
    lo, hi = config.quality_range
    target_q = float(rng.uniform(lo, hi))
    if config.layout == "stripes":
        label_arr = _stripe_label(config)
    else:
        label_arr = _blob_label(config, rng)
    label = LabelMap(label_arr)
    pred_flat = _calibrated_prediction(label, spec, target_q, rng)
    corrupted_mask = pred_flat != label_arr.ravel()
    stack = _emit_stack(pred_flat, corrupted_mask, config, rng)
    return Bundle(
        image_id=f"synthetic-{config.seed}-{index:04d}",
        class_spec=spec,
        probabilities=ProbabilityStack(stack),
        label=label,
        meta={
            "generator": "segtriage-synth",
            "layout": config.layout,
            "target_quality": f"{target_q:.6f}",
        },
    )


def generate_corpus(config: GeneratorConfig) -> list[Bundle]:
    """Deterministic corpus of labeled bundles for the given config.

    Per-image generators are spawned from the master seed, so images are
    independent of corpus size ordering and generatable in parallel.
    """
    children = np.random.SeedSequence(config.seed).spawn(config.num_images)
    return [
        _generate_one(config, i, np.random.default_rng(children[i]))
        for i in range(config.num_images)
    ]


def write_corpus(config: GeneratorConfig, out_dir: str | Path) -> dict:
    """Write the corpus as .ubnd files plus a manifest JSON; returns the
    manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundles = generate_corpus(config)
    images = []
    for i, bundle in enumerate(bundles):
        fname = f"image-{i:04d}.ubnd"
        with open(out / fname, "wb") as fh:
            write_bundle(bundle, fh)
        images.append(
            {
                "file": fname,
                "image_id": bundle.image_id,
                "target_quality": float(bundle.meta["target_quality"]),
            }
        )
    manifest = {
        "format": "segtriage-corpus-manifest",
        "format_version": 1,
        "config": {
            "num_images": config.num_images,
            "passes": config.passes,
            "num_classes": config.num_classes,
            "height": config.height,
            "width": config.width,
            "layout": config.layout,
            "quality_range": list(config.quality_range),
            "coupling": config.coupling,
            "noise_scale": config.noise_scale,
            "seed": config.seed,
            "background_coupling": config.background_coupling,
            "background_index": config.background_index,
        },
        "images": images,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
