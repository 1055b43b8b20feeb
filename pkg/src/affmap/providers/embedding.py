"""Embedding vectors, cosine similarity, and offline embedding providers."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DimensionMismatch, EmptyText, ZeroVector

TEST_EMBED_DIM = 64


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    @property
    def dimension(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def cosine_similarity(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """u.v / (|u||v|), clamped to [-1, 1] against rounding."""
    if u.dimension != v.dimension:
        raise DimensionMismatch(f"{u.dimension} vs {v.dimension}")
    a, b = u.as_array(), v.as_array()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity undefined for zero vector")
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


def _unit(vec: np.ndarray) -> tuple[float, ...]:
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ZeroVector("cannot normalize zero vector")
    return tuple(float(x) for x in vec / norm)


class TestEmbeddingProvider:
    """Deterministic offline embedding: hashed character trigrams, dim 64.

    Text is lowercased and padded with sentinel spaces; each trigram is hashed
    (sha1) to a bucket and a sign. Vectors are unit-normalized. Similar strings
    share trigrams; unrelated strings are near-orthogonal.
    """

    dimension = TEST_EMBED_DIM
    __test__ = False  # keep pytest from collecting this as a test class

    def __init__(self):
        self._cache: dict[str, EmbeddingVector] = {}

    def embed(self, text: str) -> EmbeddingVector:
        key = text.strip()
        if not key:
            raise EmptyText("cannot embed empty text")
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        padded = f" {key.lower()} "
        vec = np.zeros(TEST_EMBED_DIM)
        for i in range(len(padded) - 2):
            digest = hashlib.sha1(padded[i:i + 3].encode("utf-8")).digest()
            bucket = digest[0] % TEST_EMBED_DIM
            sign = 1.0 if digest[1] % 2 == 0 else -1.0
            vec[bucket] += sign
        if not vec.any():
            vec[0] = 1.0
        result = EmbeddingVector(_unit(vec))
        self._cache[key] = result
        return result


class ScriptedEmbeddingProvider:
    """Embeddings read from a JSON script: {"text": [numbers], ...}.

    Unknown texts fall back to the trigram test embedding so partially
    scripted fixtures stay usable. Vectors are unit-normalized on load.
    """

    def __init__(self, vectors: dict[str, list[float]]):
        self._vectors = {k: EmbeddingVector(_unit(np.asarray(v, dtype=float)))
                         for k, v in vectors.items()}
        self._fallback = TestEmbeddingProvider()
        dims = {v.dimension for v in self._vectors.values()}
        if len(dims) > 1:
            raise ValueError(f"scripted embedding dimensions differ: {sorted(dims)}")
        self.dimension = dims.pop() if dims else self._fallback.dimension

    @classmethod
    def from_file(cls, path) -> "ScriptedEmbeddingProvider":
        return cls(json.loads(Path(path).read_text()))

    def embed(self, text: str) -> EmbeddingVector:
        key = text.strip()
        if not key:
            raise EmptyText("cannot embed empty text")
        hit = self._vectors.get(key)
        if hit is not None:
            return hit
        return self._fallback.embed(key)


class SimilarityCache:
    """Memoized pairwise label similarity on top of an embedding provider.

    Identical strings short-circuit to 1.0. Embedding failures degrade to
    exact string matching (1.0 iff equal), matching the association fallback
    contract; failures are remembered so the provider is not re-hit.
    """

    def __init__(self, provider):
        self.provider = provider
        self._sims: dict[tuple[str, str], float] = {}
        self._failed = False

    def similarity(self, a: str, b: str) -> float:
        a, b = a.strip(), b.strip()
        if a == b:
            return 1.0
        key = (a, b) if a <= b else (b, a)
        hit = self._sims.get(key)
        if hit is None:
            if self._failed:
                hit = 0.0
            else:
                try:
                    hit = cosine_similarity(self.provider.embed(a), self.provider.embed(b))
                except Exception:
                    self._failed = True
                    hit = 0.0
            self._sims[key] = hit
        return hit
