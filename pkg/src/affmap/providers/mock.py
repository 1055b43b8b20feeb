"""Scripted mock providers for fully offline runs.

Script files are JSON. VLM scripts map a request fingerprint
("<image_ref>::<robot_id>") to a canned response string; "*" is a wildcard
fallback. Detection scripts map an image_ref (or the joined label list as a
fallback key) to {"detections": [{"label", "box": [x0,y0,x1,y1], "score"}]}.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from ..errors import SchemaError
from .http import _postprocess_detections
from .types import Detection, DetectionQuery, VlmRequest


class MockVlmProvider:
    kind = "vlm"

    def __init__(self, script: dict[str, str]):
        self.script = script
        self.calls: list[str] = []

    @classmethod
    def from_file(cls, path) -> "MockVlmProvider":
        return cls(json.loads(Path(path).read_text()))

    @staticmethod
    def fingerprint(request: VlmRequest) -> str:
        return f"{request.image_ref}::{request.robot_id}"

    def complete(self, request: VlmRequest) -> str:
        key = self.fingerprint(request)
        self.calls.append(key)
        if key in self.script:
            return self.script[key]
        if "*" in self.script:
            return self.script["*"]
        raise SchemaError(f"mock VLM script has no entry for {key!r}")


class MockDetectionProvider:
    kind = "detect"

    def __init__(self, script: dict, image_width: int = 640, image_height: int = 480):
        self.script = script
        self.image_width = image_width
        self.image_height = image_height
        self.calls: list[str] = []

    @classmethod
    def from_file(cls, path, image_width: int = 640, image_height: int = 480
                  ) -> "MockDetectionProvider":
        return cls(json.loads(Path(path).read_text()), image_width, image_height)

    def detect(self, query: DetectionQuery) -> list[Detection]:
        entry: Optional[dict] = self.script.get(query.image_ref)
        if entry is None:
            entry = self.script.get(",".join(query.labels))
        self.calls.append(query.image_ref or ",".join(query.labels))
        if entry is None:
            return []
        wanted = {label.strip().lower() for label in query.labels}
        raw = [d for d in entry.get("detections", [])
               if d.get("label", "").strip().lower() in wanted]
        return _postprocess_detections(raw, query.box_threshold,
                                       self.image_width, self.image_height)
