"""Model backends with lazy loading.

Real backends pull weights on first use; if loading fails (no weights on
disk, no network) the backend stays not-ready and the endpoint returns 503.
Two offline backends exist for integration testing without weights:

- detector "stub": one centred detection per queried label, score 0.9.
- embedder "hash-trigram": deterministic character-trigram hashing, unit
  vectors of dimension 384. Similarities are not semantically meaningful;
  it only exercises the wire protocol.
"""

from __future__ import annotations

import hashlib
import threading
from typing import Optional

import numpy as np


class BackendError(Exception):
    """Model could not be loaded or run."""


class _LazyBackend:
    """Loads the underlying model once, under a lock; model inference is
    serialized through the same lock (single CPU/GPU context)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._loaded = False
        self._load_error: Optional[str] = None

    @property
    def ready(self) -> bool:
        return self._loaded

    def _load(self) -> None:  # pragma: no cover - overridden
        raise NotImplementedError

    def ensure_loaded(self) -> None:
        with self._lock:
            if self._loaded:
                return
            if self._load_error is not None:
                raise BackendError(self._load_error)
            try:
                self._load()
            except Exception as exc:  # noqa: BLE001 - any load failure is 503
                self._load_error = f"{type(exc).__name__}: {exc}"
                raise BackendError(self._load_error) from exc
            self._loaded = True


# --- detection ---

class StubDetector(_LazyBackend):
    """Offline detector: a centred box covering 20% of each side per label."""

    def _load(self) -> None:
        pass

    def detect(self, image, labels, box_threshold):
        self.ensure_loaded()
        width, height = image.size
        score = 0.9
        if score < box_threshold:
            return []
        box = [0.4 * width, 0.4 * height, 0.6 * width, 0.6 * height]
        return [{"label": label, "box": [float(v) for v in box], "score": score}
                for label in labels]


class GroundingDinoDetector(_LazyBackend):
    """Zero-shot open-vocabulary detection via transformers.

    The text prompt joins the queried labels with ". " (trailing "."), the
    conventional query format for this model family.
    """

    def __init__(self, model_id: str, device: str = "cpu"):
        super().__init__()
        self.model_id = model_id
        self.device = device
        self._processor = None
        self._model = None

    def _load(self) -> None:
        import torch  # noqa: F401 - required by transformers at runtime
        from transformers import (AutoModelForZeroShotObjectDetection,
                                  AutoProcessor)
        self._processor = AutoProcessor.from_pretrained(self.model_id)
        self._model = AutoModelForZeroShotObjectDetection.from_pretrained(
            self.model_id).to(self.device)

    def detect(self, image, labels, box_threshold):
        self.ensure_loaded()
        import torch
        prompt = ". ".join(labels) + "."
        with self._lock:
            inputs = self._processor(images=image, text=prompt,
                                     return_tensors="pt").to(self.device)
            with torch.no_grad():
                outputs = self._model(**inputs)
            results = self._processor.post_process_grounded_object_detection(
                outputs, inputs.input_ids, threshold=box_threshold,
                target_sizes=[image.size[::-1]])[0]
        detections = []
        for label, box, score in zip(results["labels"], results["boxes"],
                                     results["scores"]):
            detections.append({"label": str(label),
                               "box": [float(v) for v in box],
                               "score": float(score)})
        return detections


class HashTrigramEmbedder(_LazyBackend):
    """Deterministic fallback embedder (no semantics, wire-protocol only)."""

    dimension = 384

    def _load(self) -> None:
        pass

    def embed(self, texts):
        self.ensure_loaded()
        vectors = []
        for text in texts:
            padded = f" {text.lower()} "
            vec = np.zeros(self.dimension)
            for i in range(len(padded) - 2):
                digest = hashlib.sha1(padded[i:i + 3].encode()).digest()
                bucket = digest[0] % self.dimension
                sign = 1.0 if digest[1] % 2 == 0 else -1.0
                vec[bucket] += sign
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec = vec / norm
            else:
                vec[0] = 1.0
            vectors.append(vec)
        return np.array(vectors)


class SentenceTransformerEmbedder(_LazyBackend):
    def __init__(self, model_id: str, device: str = "cpu"):
        super().__init__()
        self.model_id = model_id
        self.device = device
        self._model = None

    def _load(self) -> None:
        from sentence_transformers import SentenceTransformer
        self._model = SentenceTransformer(self.model_id, device=self.device)

    def embed(self, texts):
        self.ensure_loaded()
        with self._lock:
            vectors = self._model.encode(list(texts), convert_to_numpy=True,
                                         normalize_embeddings=True)
        return np.asarray(vectors, dtype=float)


def make_detector(identifier: str, device: str):
    if identifier == "stub":
        return StubDetector()
    return GroundingDinoDetector(identifier, device)


def make_embedder(identifier: str, device: str):
    if identifier == "hash-trigram":
        return HashTrigramEmbedder()
    return SentenceTransformerEmbedder(identifier, device)
