"""FastAPI application: POST /detect and GET /health.

Configuration is environment-driven: DETECTOR_MODE={live,fixture},
FIXTURE_DIR for the fixture store, DETECT_SCORE_THRESHOLD (default 0.1),
PORT for the runner. Responses are rendered with sorted keys and no
volatile fields, so fixture-mode responses are byte-deterministic.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import os

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import Response
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, ValidationError

from .backends import (
    DEFAULT_SCORE_THRESHOLD,
    BackendError,
    FixtureBackend,
    LiveBackend,
    ModelsNotLoaded,
)


class DetectRequest(BaseModel):
    image: str
    query: str
    want_mask: bool = True


def _json_response(payload: dict, status_code: int = 200) -> Response:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return Response(content=body.encode("utf-8"), status_code=status_code,
                    media_type="application/json")


def _decode_image(b64: str) -> np.ndarray:
    raw = base64.b64decode(b64, validate=True)
    img = Image.open(io.BytesIO(raw)).convert("RGB")
    return np.asarray(img, dtype=np.uint8)


def build_backend():
    mode = os.environ.get("DETECTOR_MODE", "fixture")
    if mode == "fixture":
        return FixtureBackend(os.environ.get("FIXTURE_DIR"))
    if mode == "live":
        return LiveBackend()
    raise BackendError(f"DETECTOR_MODE must be live or fixture, got {mode!r}")


def create_app(backend=None, threshold: float | None = None) -> FastAPI:
    app = FastAPI(title="detect-service", docs_url=None, redoc_url=None)
    app.state.backend = backend if backend is not None else build_backend()
    app.state.threshold = (threshold if threshold is not None else
                           float(os.environ.get("DETECT_SCORE_THRESHOLD",
                                                DEFAULT_SCORE_THRESHOLD)))

    @app.post("/detect")
    async def detect(request: Request) -> Response:
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return _json_response({"error": "body is not valid JSON"}, 400)
        try:
            req = DetectRequest.model_validate(body)
        except ValidationError as e:
            return _json_response({"error": f"bad request: {e.errors()[0]['msg']}"}, 400)
        if not req.query.strip():
            return _json_response({"error": "query must be non-empty"}, 400)
        try:
            rgb = _decode_image(req.image)
        except (binascii.Error, UnidentifiedImageError, OSError, ValueError):
            return _json_response({"error": "image is not decodable base64 PNG"}, 400)
        backend = app.state.backend
        try:
            detections = backend.detect(rgb, req.query, req.want_mask,
                                        app.state.threshold)
        except ModelsNotLoaded as e:
            return _json_response({"error": str(e)}, 503)
        return _json_response({"detections": detections,
                               "model_info": backend.model_info()})

    @app.get("/health")
    async def health() -> Response:
        backend = app.state.backend
        if not backend.ready():
            return _json_response({"error": "models not loaded"}, 503)
        return _json_response({"mode": backend.mode,
                               "models": backend.model_info()})

    return app


def main() -> None:
    import uvicorn

    port = int(os.environ.get("PORT", "8270"))
    uvicorn.run(create_app(), host="0.0.0.0", port=port)


if __name__ == "__main__":
    main()
