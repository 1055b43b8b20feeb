"""HTTP serving shim: detection and sentence-embedding models behind a
fixed wire protocol, so pipeline code never runs ML in-process."""

from .app import create_app
from .config import ShimConfig

__all__ = ["create_app", "ShimConfig"]
