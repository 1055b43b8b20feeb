"""Prompt construction, VLM runs over sampled frames, and response parsing."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .dataset import AnnotationSet, DatasetManifest, RobotProfile, Sequence, sample_frames
from .errors import AuthError, UnparseableResponse
from .providers.types import VlmRequest

log = logging.getLogger(__name__)

# Reconstruction of the task framing; version-pinned so runs stay comparable.
INSTRUCTION_VERSION = 1
TASK_INSTRUCTION = (
    "Look at the image. Identify the objects in view. Given my physical "
    "description, list the affordances available to me and which objects "
    "afford them. Answer with a single JSON object mapping each affordance "
    "to a list of object labels, and output nothing else."
)


@dataclass
class InferenceRecord:
    frame_index: int
    robot_id: str
    raw_response: str
    parsed: AnnotationSet
    latency: float
    trial_id: int
    error: Optional[str] = None


def build_prompt(robot: RobotProfile) -> tuple[str, str]:
    """(system_prompt, instruction) for one robot; the description is verbatim."""
    return robot.prompt, TASK_INSTRUCTION


def _candidate_json_objects(raw: str):
    """Yield balanced {...} slices of raw, outermost first, left to right."""
    depth = 0
    start = -1
    in_string = False
    escape = False
    for i, ch in enumerate(raw):
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0:
                    yield raw[start:i + 1]


def parse_response(raw: str, robot_id: str = "", frame_index: int = -1) -> AnnotationSet:
    """Extract the first JSON object from arbitrary VLM text.

    Surrounding prose and code fences are tolerated. Keys become affordance
    labels (trimmed, case preserved); values must be lists of strings; empty
    object lists are dropped. Raises UnparseableResponse when no JSON object
    can be found.
    """
    if not isinstance(raw, str):
        raise UnparseableResponse("response is not text")
    for candidate in _candidate_json_objects(raw):
        try:
            doc = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if not isinstance(doc, dict):
            continue
        entries: dict[str, set[str]] = {}
        for key, value in doc.items():
            label = str(key).strip()
            if not label or not isinstance(value, list):
                continue
            objects = {str(o).strip() for o in value if isinstance(o, str) and str(o).strip()}
            if objects:
                entries[label] = objects
        return AnnotationSet(robot_id=robot_id, frame_index=frame_index, entries=entries)
    raise UnparseableResponse("no JSON object found in response")


def serialize_annotation(annotation: AnnotationSet) -> str:
    """JSON text whose parse_response round-trips to the same AnnotationSet."""
    return json.dumps({a: sorted(objs) for a, objs in sorted(annotation.entries.items())})


def _load_image(manifest: DatasetManifest, image_ref: str) -> bytes:
    path = manifest.base_dir / image_ref
    if path.exists():
        return path.read_bytes()
    # scripted/mock runs may reference images that were never materialized
    return image_ref.encode("utf-8")


def run_inference(manifest: DatasetManifest, sequence: Sequence, robot: RobotProfile,
                  vlm_provider, sample_rate_n: int, trial_id: int = 1,
                  max_workers: int = 4) -> list[InferenceRecord]:
    """One InferenceRecord per sampled frame, ordered by frame index.

    Per-frame failures are recorded (empty annotation + error string) rather
    than aborting; only AuthError aborts, since it means misconfiguration.
    """
    system_prompt, instruction = build_prompt(robot)
    frames = sample_frames(sequence, sample_rate_n)

    def infer_one(frame) -> InferenceRecord:
        request = VlmRequest(
            image=_load_image(manifest, frame.image_ref),
            system_prompt=system_prompt,
            instruction=instruction,
            image_ref=frame.image_ref,
            robot_id=robot.robot_id,
            trial_salt=trial_id,
        )
        started = time.monotonic()
        try:
            raw = vlm_provider.complete(request)
        except AuthError:
            raise
        except Exception as exc:
            log.warning("frame %d: provider failure: %s", frame.frame_index, exc)
            return InferenceRecord(frame.frame_index, robot.robot_id, "",
                                   AnnotationSet(robot.robot_id, frame.frame_index),
                                   time.monotonic() - started, trial_id,
                                   error=f"{type(exc).__name__}: {exc}")
        latency = time.monotonic() - started
        try:
            parsed = parse_response(raw, robot.robot_id, frame.frame_index)
            error = None
        except UnparseableResponse as exc:
            parsed = AnnotationSet(robot.robot_id, frame.frame_index)
            error = f"UnparseableResponse: {exc}"
        return InferenceRecord(frame.frame_index, robot.robot_id, raw, parsed,
                               latency, trial_id, error=error)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        records = list(pool.map(infer_one, frames))
    records.sort(key=lambda r: r.frame_index)
    return records


def write_records(records: list[InferenceRecord], path) -> None:
    """JSON-lines log, one record per line."""
    lines = []
    for r in records:
        lines.append(json.dumps({
            "frame": r.frame_index,
            "robot_id": r.robot_id,
            "trial": r.trial_id,
            "raw": r.raw_response,
            "parsed": {a: sorted(objs) for a, objs in sorted(r.parsed.entries.items())},
            "latency_s": round(r.latency, 6),
            "error": r.error,
        }, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_records(path) -> list[InferenceRecord]:
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        parsed = AnnotationSet(doc["robot_id"], doc["frame"],
                               {a: set(objs) for a, objs in doc["parsed"].items()})
        records.append(InferenceRecord(doc["frame"], doc["robot_id"], doc["raw"],
                                       parsed, doc["latency_s"], doc["trial"],
                                       error=doc.get("error")))
    return records
