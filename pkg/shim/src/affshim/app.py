"""FastAPI application exposing /detect, /embed, and /health.

Error mapping: 400 malformed request body, 422 undecodable image,
503 model not loaded/loadable. Models lazy-load on first request;
/health reports readiness without triggering a load.
"""

from __future__ import annotations

import base64
import binascii
import io

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .backends import BackendError, make_detector, make_embedder
from .config import ShimConfig

DEFAULT_BOX_THRESHOLD = 0.35


def _bad_request(detail: str) -> JSONResponse:
    return JSONResponse({"error": detail}, status_code=400)


async def _json_body(request: Request):
    try:
        body = await request.json()
    except Exception:  # noqa: BLE001 - any parse failure is a 400
        return None
    return body if isinstance(body, dict) else None


def create_app(config: ShimConfig | None = None) -> FastAPI:
    config = config or ShimConfig.from_env()
    app = FastAPI(title="affshim")
    detector = make_detector(config.detector, config.device)
    embedder = make_embedder(config.embedder, config.device)
    app.state.config = config
    app.state.detector = detector
    app.state.embedder = embedder

    @app.get("/health")
    def health():
        if detector.ready and embedder.ready:
            return {"status": "ok"}
        return {"status": "not_ready", "detector": detector.ready,
                "embedder": embedder.ready}

    @app.post("/detect")
    async def detect(request: Request):
        body = await _json_body(request)
        if body is None:
            return _bad_request("body must be a JSON object")
        image_b64 = body.get("image_b64")
        labels = body.get("labels")
        threshold = body.get("box_threshold", DEFAULT_BOX_THRESHOLD)
        if not isinstance(image_b64, str) or not image_b64:
            return _bad_request("image_b64 must be a non-empty base64 string")
        if (not isinstance(labels, list) or not labels
                or not all(isinstance(l, str) and l for l in labels)):
            return _bad_request("labels must be a non-empty list of strings")
        if not isinstance(threshold, (int, float)) or not 0 <= threshold <= 1:
            return _bad_request("box_threshold must be a number in [0, 1]")
        try:
            raw = base64.b64decode(image_b64, validate=True)
        except (binascii.Error, ValueError):
            return JSONResponse({"error": "image is not valid base64"},
                                status_code=422)
        try:
            from PIL import Image
            image = Image.open(io.BytesIO(raw))
            image.load()
            image = image.convert("RGB")
        except Exception:  # noqa: BLE001 - any decode failure is a 422
            return JSONResponse({"error": "image could not be decoded"},
                                status_code=422)
        try:
            detections = detector.detect(image, labels, float(threshold))
        except BackendError as exc:
            return JSONResponse({"error": f"detector not available: {exc}"},
                                status_code=503)
        return {"detections": detections}

    @app.post("/embed")
    async def embed(request: Request):
        body = await _json_body(request)
        if body is None:
            return _bad_request("body must be a JSON object")
        texts = body.get("texts")
        if (not isinstance(texts, list) or not texts
                or not all(isinstance(t, str) and t.strip() for t in texts)):
            return _bad_request("texts must be a non-empty list of "
                                "non-empty strings")
        try:
            vectors = embedder.embed(texts)
        except BackendError as exc:
            return JSONResponse({"error": f"embedder not available: {exc}"},
                                status_code=503)
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        vectors = vectors / np.where(norms == 0, 1.0, norms)
        return {"vectors": [[float(x) for x in row] for row in vectors],
                "dimension": int(vectors.shape[1])}

    return app
