from .embedding import (
    EmbeddingVector,
    ScriptedEmbeddingProvider,
    TestEmbeddingProvider,
    cosine_similarity,
)
from .http import HttpDetectionProvider, HttpEmbeddingProvider, HttpVlmProvider
from .mock import MockDetectionProvider, MockVlmProvider
from .transport import RetryPolicy, Transport
from .types import Detection, DetectionQuery, VlmRequest

__all__ = [
    "Detection",
    "DetectionQuery",
    "EmbeddingVector",
    "HttpDetectionProvider",
    "HttpEmbeddingProvider",
    "HttpVlmProvider",
    "MockDetectionProvider",
    "MockVlmProvider",
    "RetryPolicy",
    "ScriptedEmbeddingProvider",
    "TestEmbeddingProvider",
    "Transport",
    "VlmRequest",
    "cosine_similarity",
]
