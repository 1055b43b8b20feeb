"""Disk cache for provider responses.

Keyed by SHA-256 of (provider kind, model id, request body) so identical
calls across re-runs are served locally. Trial salts are part of the request
body, so independent trials never collapse into one cache entry.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Optional


class ResponseCache:
    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def key(kind: str, model_id: str, body: dict) -> str:
        payload = json.dumps([kind, model_id, body], sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> Optional[dict]:
        with self._lock:
            path = self._path(key)
            if not path.exists():
                return None
            return json.loads(path.read_text())

    def put(self, key: str, value: dict) -> None:
        with self._lock:
            tmp = self._path(key).with_suffix(".tmp")
            tmp.write_text(json.dumps(value, sort_keys=True))
            tmp.replace(self._path(key))
