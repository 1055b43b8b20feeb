"""Service configuration, sourced from environment variables."""

from __future__ import annotations

import os
from dataclasses import dataclass

DEFAULT_DETECTOR = "IDEA-Research/grounding-dino-tiny"
DEFAULT_EMBEDDER = "sentence-transformers/all-MiniLM-L6-v2"


@dataclass(frozen=True)
class ShimConfig:
    host: str = "127.0.0.1"
    port: int = 8040
    detector: str = DEFAULT_DETECTOR
    embedder: str = DEFAULT_EMBEDDER
    device: str = "cpu"

    def __post_init__(self):
        if not 1024 <= self.port <= 65535:
            raise ValueError(f"port must be in [1024, 65535], got {self.port}")

    @classmethod
    def from_env(cls) -> "ShimConfig":
        return cls(
            host=os.environ.get("SHIM_HOST", cls.host),
            port=int(os.environ.get("SHIM_PORT", cls.port)),
            detector=os.environ.get("SHIM_DETECTOR", cls.detector),
            embedder=os.environ.get("SHIM_EMBEDDER", cls.embedder),
            device=os.environ.get("SHIM_DEVICE", cls.device),
        )
