import io

import numpy as np
import pytest

from segtriage.bundle import Bundle, ClassSpec, LabelMap, ProbabilityStack


def random_stack(rng, t, c, h, w) -> np.ndarray:
    """Random softmax stack: positive draws normalized per pixel, f32."""
    raw = rng.uniform(0.05, 1.0, size=(t, c, h, w))
    raw /= raw.sum(axis=1, keepdims=True)
    return raw.astype(np.float32)


def make_class_spec(c: int) -> ClassSpec:
    names = tuple(["background"] + [f"class_{i}" for i in range(1, c)])
    return ClassSpec(num_classes=c, class_names=names, background_index=0)


def make_bundle(
    rng,
    t=2,
    c=3,
    h=4,
    w=5,
    image_id="img-0",
    with_label=True,
    with_source=False,
    meta=None,
) -> Bundle:
    stack = ProbabilityStack(random_stack(rng, t, c, h, w))
    label = (
        LabelMap(rng.integers(0, c, size=(h, w)).astype(np.uint8))
        if with_label
        else None
    )
    source = (
        rng.integers(0, 256, size=(h, w, 3)).astype(np.uint8) if with_source else None
    )
    return Bundle(
        image_id=image_id,
        class_spec=make_class_spec(c),
        probabilities=stack,
        label=label,
        source_image=source,
        meta=dict(meta or {}),
    )


def roundtrip_bytes(bundle) -> bytes:
    from segtriage.bundle import write_bundle

    buf = io.BytesIO()
    write_bundle(bundle, buf)
    return buf.getvalue()


@pytest.fixture
def rng():
    return np.random.default_rng(42)
