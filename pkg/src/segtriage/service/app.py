"""HTTP surface of the triage service.

JSON API over the event-sourced store plus PNG overlay rendering. Errors
are JSON objects {code, message, details}.
"""

from __future__ import annotations

import io
import json
import math
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse
from PIL import Image

from ..bundle import BundleError, BundleValidationError
from ..metrics import argmax_segmentation, mean_probability
from ..statmodel import InsufficientDataError, SingularDesignError, model_to_json
from ..uncertainty import entropy_map, entropy_to_grayscale
from .store import ConflictError, StoreError, TriageStore, UnknownItemError

__all__ = ["create_app", "DEFAULT_PALETTE", "load_palette"]

# Background black, then the red/green/blue wear coding, then spares.
DEFAULT_PALETTE = [
    (0, 0, 0),
    (220, 50, 47),
    (64, 200, 64),
    (38, 139, 210),
    (240, 200, 40),
    (211, 54, 130),
    (42, 161, 152),
    (255, 255, 255),
]


def load_palette(path: str | Path) -> list[tuple[int, int, int]]:
    """Palette file: JSON list of [r, g, b] triples, one per class index."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    palette = []
    for entry in raw:
        r, g, b = (int(v) for v in entry)
        palette.append((r, g, b))
    if not palette:
        raise ValueError("palette file is empty")
    return palette


def _error(status: int, code: str, message: str, details=None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "details": details},
    )


def create_app(
    store: TriageStore, palette: list[tuple[int, int, int]] | None = None
) -> FastAPI:
    app = FastAPI(title="segtriage review service", version="1")
    colors = palette or DEFAULT_PALETTE

    @app.exception_handler(BundleValidationError)
    async def _validation_handler(request: Request, exc: BundleValidationError):
        return _error(400, "invalid_bundle", "bundle failed validation", exc.violations)

    @app.exception_handler(BundleError)
    async def _bundle_handler(request: Request, exc: BundleError):
        return _error(400, "invalid_bundle", str(exc), [type(exc).__name__])

    @app.exception_handler(ConflictError)
    async def _conflict_handler(request: Request, exc: ConflictError):
        return _error(409, "conflict", str(exc))

    @app.exception_handler(UnknownItemError)
    async def _unknown_handler(request: Request, exc: UnknownItemError):
        return _error(404, "not_found", str(exc))

    @app.exception_handler(InsufficientDataError)
    async def _insufficient_handler(request: Request, exc: InsufficientDataError):
        return _error(409, "insufficient_data", str(exc))

    @app.exception_handler(SingularDesignError)
    async def _singular_handler(request: Request, exc: SingularDesignError):
        return _error(409, "singular_design", str(exc))

    @app.exception_handler(StoreError)
    async def _store_handler(request: Request, exc: StoreError):
        return _error(400, "bad_request", str(exc))

    @app.post("/v1/bundles", status_code=201)
    async def ingest(request: Request):
        data = await request.body()
        item = store.ingest(data)
        return item.to_dict()

    @app.get("/v1/queue")
    async def queue(limit: int | None = Query(default=None, ge=1)):
        items = store.queue(limit=limit)
        return {"items": [i.to_dict() for i in items], "count": len(items)}

    @app.get("/v1/items/{item_id}")
    async def get_item(item_id: str):
        return store.item(item_id).to_dict()

    @app.get("/v1/items/{item_id}/overlay.png")
    async def overlay(item_id: str, kind: str = Query(default="entropy")):
        if kind not in ("entropy", "segmentation"):
            return _error(400, "bad_request", f"unknown overlay kind {kind!r}")
        bundle = store.load_bundle(item_id)
        pmap = mean_probability(bundle.probabilities)
        if kind == "entropy":
            gray = entropy_to_grayscale(
                entropy_map(pmap), bundle.class_spec.num_classes
            )
            img = Image.fromarray(gray, mode="L")
        else:
            seg = argmax_segmentation(pmap).values
            pal = np.array(colors, dtype=np.uint8)
            rgb = pal[seg.astype(np.int64) % len(colors)]
            img = Image.fromarray(rgb, mode="RGB")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return Response(
            content=buf.getvalue(),
            media_type="image/png",
            headers={
                "X-Entropy-Max": repr(math.log(bundle.class_spec.num_classes)),
            },
        )

    @app.get("/v1/items/{item_id}/source.png")
    async def source_image(item_id: str):
        bundle = store.load_bundle(item_id)
        if bundle.source_image is None:
            return _error(404, "not_found", "bundle carries no source image")
        img = Image.fromarray(bundle.source_image, mode="RGB")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/v1/items/{item_id}/decision")
    async def decide(item_id: str, request: Request):
        body = await request.json()
        action = body.get("action")
        if action not in ("accept", "annotate"):
            return _error(400, "bad_request", f"unknown action {action!r}")
        label_bytes = None
        if body.get("label_base64"):
            label_bytes = TriageStore.decode_label_base64(body["label_base64"])
        item = store.decide(
            item_id,
            action,
            label_bytes=label_bytes,
            decided_by=body.get("decided_by"),
        )
        return item.to_dict()

    @app.post("/v1/model/fit")
    async def fit(request: Request):
        body = await request.json() if await request.body() else {}
        alpha = float(body.get("alpha", 0.05))
        model = store.fit(alpha=alpha)
        return {
            "model": json.loads(model_to_json(model)),
            "model_version": store.model_version,
        }

    @app.get("/v1/model")
    async def get_model():
        if store.model is None:
            return _error(404, "not_found", "no model fitted yet")
        return {
            "model": json.loads(model_to_json(store.model)),
            "model_version": store.model_version,
        }

    @app.get("/v1/metrics")
    async def metrics():
        return store.metrics()

    return app
