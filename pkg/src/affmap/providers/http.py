"""HTTP clients for the three external model services.

Wire formats:
- VLM: POST $AFF_VLM_URL, {"model_id", "system_prompt", "instruction",
  "image_b64", "trial_salt"} -> {"text": str}. Bearer credential from
  $AFF_VLM_API_KEY.
- Detection: POST $AFF_DETECT_URL/detect, {"image_b64", "labels",
  "box_threshold"} -> {"detections": [{"label", "box": [x0,y0,x1,y1], "score"}]}
- Embedding: POST $AFF_EMBED_URL/embed, {"texts"} -> {"vectors", "dimension"}
"""

from __future__ import annotations

import base64
import os
from typing import Optional

import numpy as np

from ..errors import AuthError, EmptyText, SchemaError
from .cache import ResponseCache
from .embedding import EmbeddingVector, _unit
from .transport import Transport
from .types import Detection, DetectionQuery, VlmRequest, clamp_box

ENV_VLM_KEY = "AFF_VLM_API_KEY"
ENV_VLM_URL = "AFF_VLM_URL"
ENV_VLM_MODEL = "AFF_VLM_MODEL"
ENV_DETECT_URL = "AFF_DETECT_URL"
ENV_EMBED_URL = "AFF_EMBED_URL"


class HttpVlmProvider:
    kind = "vlm"

    def __init__(self, url: Optional[str] = None, api_key: Optional[str] = None,
                 model_id: Optional[str] = None, transport: Optional[Transport] = None,
                 cache: Optional[ResponseCache] = None):
        self.url = url or os.environ.get(ENV_VLM_URL, "")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_VLM_KEY)
        self.model_id = model_id or os.environ.get(ENV_VLM_MODEL, "default")
        self.transport = transport or Transport()
        self.cache = cache

    def complete(self, request: VlmRequest) -> str:
        if not self.api_key:
            raise AuthError(f"{ENV_VLM_KEY} is not set")
        if not self.url:
            raise AuthError(f"{ENV_VLM_URL} is not set")
        body = {
            "model_id": request.model_id if request.model_id != "default" else self.model_id,
            "system_prompt": request.system_prompt,
            "instruction": request.instruction,
            "image_b64": base64.b64encode(request.image).decode("ascii"),
            "trial_salt": request.trial_salt,
        }
        key = ResponseCache.key(self.kind, body["model_id"], body)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit["text"]
        doc = self.transport.post_json(self.url, body,
                                       headers={"Authorization": f"Bearer {self.api_key}"})
        if "text" not in doc:
            raise SchemaError("VLM response missing 'text'")
        if self.cache is not None:
            self.cache.put(key, {"text": doc["text"]})
        return doc["text"]


def _postprocess_detections(raw: list, threshold: float, width: int, height: int
                            ) -> list[Detection]:
    """Shared filter/clamp/sort rule for scripted and live detections."""
    out = []
    for item in raw:
        try:
            label, box, score = item["label"], item["box"], float(item["score"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"detection missing required fields: {item!r}") from exc
        if score < threshold:
            continue
        out.append(Detection(label=label,
                             box=clamp_box(box[0], box[1], box[2], box[3], width, height),
                             score=score))
    out.sort(key=lambda d: (-d.score, d.label))
    return out


class HttpDetectionProvider:
    kind = "detect"

    def __init__(self, url: Optional[str] = None, transport: Optional[Transport] = None,
                 cache: Optional[ResponseCache] = None,
                 image_width: int = 640, image_height: int = 480):
        base = (url or os.environ.get(ENV_DETECT_URL, "")).rstrip("/")
        self.url = base + "/detect" if base and not base.endswith("/detect") else base
        self.transport = transport or Transport()
        self.cache = cache
        self.image_width = image_width
        self.image_height = image_height

    def detect(self, query: DetectionQuery) -> list[Detection]:
        if not self.url:
            raise AuthError(f"{ENV_DETECT_URL} is not set")
        body = {
            "image_b64": base64.b64encode(query.image).decode("ascii"),
            "labels": list(query.labels),
            "box_threshold": query.box_threshold,
        }
        key = ResponseCache.key(self.kind, "", body)
        doc = self.cache.get(key) if self.cache is not None else None
        if doc is None:
            doc = self.transport.post_json(self.url, body)
            if "detections" not in doc:
                raise SchemaError("detection response missing 'detections'")
            if self.cache is not None:
                self.cache.put(key, doc)
        return _postprocess_detections(doc["detections"], query.box_threshold,
                                       self.image_width, self.image_height)


class HttpEmbeddingProvider:
    kind = "embed"

    def __init__(self, url: Optional[str] = None, transport: Optional[Transport] = None,
                 cache: Optional[ResponseCache] = None):
        base = (url or os.environ.get(ENV_EMBED_URL, "")).rstrip("/")
        self.url = base + "/embed" if base and not base.endswith("/embed") else base
        self.transport = transport or Transport()
        self.cache = cache
        self._memo: dict[str, EmbeddingVector] = {}
        self.dimension: Optional[int] = None

    def embed(self, text: str) -> EmbeddingVector:
        text = text.strip()
        if not text:
            raise EmptyText("cannot embed empty text")
        hit = self._memo.get(text)
        if hit is not None:
            return hit
        if not self.url:
            raise AuthError(f"{ENV_EMBED_URL} is not set")
        body = {"texts": [text]}
        key = ResponseCache.key(self.kind, "", body)
        doc = self.cache.get(key) if self.cache is not None else None
        if doc is None:
            doc = self.transport.post_json(self.url, body)
            if "vectors" not in doc:
                raise SchemaError("embedding response missing 'vectors'")
            if self.cache is not None:
                self.cache.put(key, doc)
        vec = EmbeddingVector(_unit(np.asarray(doc["vectors"][0], dtype=float)))
        if self.dimension is None:
            self.dimension = vec.dimension
        self._memo[text] = vec
        return vec
