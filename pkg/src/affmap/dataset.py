"""Dataset manifest loading, frame sampling and ground-truth access.

A manifest is a single JSON document describing camera sequences (frames with
world-from-camera poses and calibration), the object catalog with its five
cluster groups, the robot profiles, and exhaustive ground-truth labels
(explicit true AND false rows, so the negative universe is closed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ParseError, UnknownRobot, ValidationError

ROTATION_TOL = 1e-6


@dataclass(frozen=True)
class RobotProfile:
    robot_id: str
    prompt: str
    affordances: tuple[str, ...]
    is_baseline: bool = False

    def __post_init__(self):
        if not self.prompt:
            raise ValidationError(f"robot {self.robot_id!r}: empty prompt")
        if not self.affordances:
            raise ValidationError(f"robot {self.robot_id!r}: empty affordance vocabulary")
        if len(set(self.affordances)) != len(self.affordances):
            raise ValidationError(f"robot {self.robot_id!r}: duplicate affordance labels")


@dataclass(frozen=True)
class CameraCalibration:
    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("calibration: focal lengths must be positive")
        if not (0 <= self.cx < self.image_width and 0 <= self.cy < self.image_height):
            raise ValidationError("calibration: principal point outside image")


@dataclass(frozen=True)
class FrameSample:
    frame_index: int
    timestamp: float
    image_ref: str
    rotation: np.ndarray  # 3x3 world-from-camera
    translation: np.ndarray  # 3-vector, meters

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        if R.shape != (3, 3):
            raise ValidationError(f"frame {self.frame_index}: rotation must be 3x3")
        if not np.allclose(R @ R.T, np.eye(3), atol=ROTATION_TOL):
            raise ValidationError(f"frame {self.frame_index}: rotation not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ROTATION_TOL:
            raise ValidationError(f"frame {self.frame_index}: rotation determinant != +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))


@dataclass
class AnnotationSet:
    """Affordance -> set of object labels, for one (frame, robot)."""

    robot_id: str
    frame_index: int
    entries: dict[str, set[str]] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, AnnotationSet):
            return NotImplemented
        return (self.robot_id, self.frame_index, self.entries) == (
            other.robot_id, other.frame_index, other.entries)


@dataclass(frozen=True)
class CatalogObject:
    object_id: str
    canonical_label: str
    cluster_label: str


@dataclass
class ObjectCatalog:
    objects: list[CatalogObject]
    clusters: list[str]

    def __post_init__(self):
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValidationError("catalog: duplicate object_id")
        cluster_set = set(self.clusters)
        for o in self.objects:
            if o.cluster_label not in cluster_set:
                raise ValidationError(
                    f"catalog: object {o.object_id!r} has unknown cluster {o.cluster_label!r}")
        self._by_id = {o.object_id: o for o in self.objects}
        self._cluster_by_label = {o.canonical_label: o.cluster_label for o in self.objects}

    def object_by_id(self, object_id: str) -> CatalogObject:
        return self._by_id[object_id]

    def cluster_of_label(self, label: str) -> Optional[str]:
        return self._cluster_by_label.get(label)


@dataclass(frozen=True)
class GroundTruthLabel:
    frame_index: int
    robot_id: str
    object_id: str
    affordance: str
    value: bool


@dataclass
class Sequence:
    sequence_id: str
    frame_rate: float
    calibration: CameraCalibration
    frames: list[FrameSample]

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ValidationError(f"sequence {self.sequence_id!r}: frame_rate must be > 0")
        indices = [f.frame_index for f in self.frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValidationError(
                f"sequence {self.sequence_id!r}: frame_index not strictly increasing")
        self._by_index = {f.frame_index: f for f in self.frames}

    def frame(self, index: int) -> Optional[FrameSample]:
        return self._by_index.get(index)


@dataclass
class DatasetManifest:
    sequences: list[Sequence]
    catalog: ObjectCatalog
    robots: list[RobotProfile]
    ground_truth: list[GroundTruthLabel]
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        self._robots_by_id = {r.robot_id: r for r in self.robots}
        known_frames = {f.frame_index for s in self.sequences for f in s.frames}
        seen = set()
        for gt in self.ground_truth:
            key = (gt.frame_index, gt.robot_id, gt.object_id, gt.affordance)
            if key in seen:
                raise ValidationError(f"ground_truth: duplicate row {key}")
            seen.add(key)
            if gt.frame_index not in known_frames:
                raise ValidationError(
                    f"ground_truth: frame {gt.frame_index} not found in any sequence")
            robot = self._robots_by_id.get(gt.robot_id)
            if robot is None:
                raise ValidationError(f"ground_truth: unknown robot {gt.robot_id!r}")
            if gt.affordance not in robot.affordances:
                raise ValidationError(
                    f"ground_truth: affordance {gt.affordance!r} not in vocabulary of "
                    f"{gt.robot_id!r}")
            if gt.object_id not in self.catalog._by_id:
                raise ValidationError(f"ground_truth: unknown object {gt.object_id!r}")

    def robot(self, robot_id: str) -> RobotProfile:
        try:
            return self._robots_by_id[robot_id]
        except KeyError:
            raise UnknownRobot(robot_id) from None


def _require(obj: dict, key: str, context: str):
    if key not in obj:
        raise ValidationError(f"{context}: missing field {key!r}")
    return obj[key]


def load_manifest(path) -> DatasetManifest:
    """Load and validate a manifest JSON document."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read manifest {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed manifest JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"manifest root must be an object: {path}")
    return manifest_from_dict(doc, base_dir=path.parent)


def manifest_from_dict(doc: dict, base_dir: Path = Path(".")) -> DatasetManifest:
    sequences = []
    for seq in _require(doc, "sequences", "manifest"):
        cal = _require(seq, "calibration", "sequence")
        calibration = CameraCalibration(
            fx=cal["fx"], fy=cal["fy"], cx=cal["cx"], cy=cal["cy"],
            image_width=cal["width"], image_height=cal["height"])
        frame_rate = _require(seq, "frame_rate", "sequence")
        frames = []
        for fr in _require(seq, "frames", "sequence"):
            pose = _require(fr, "pose", "frame")
            index = _require(fr, "index", "frame")
            frames.append(FrameSample(
                frame_index=index,
                # timestamp derived from the frame index when not recorded
                timestamp=fr.get("timestamp", index / frame_rate),
                image_ref=_require(fr, "image", "frame"),
                rotation=np.asarray(pose["rotation"], dtype=float).reshape(3, 3),
                translation=np.asarray(pose["translation"], dtype=float),
            ))
        sequences.append(Sequence(
            sequence_id=_require(seq, "sequence_id", "sequence"),
            frame_rate=frame_rate,
            calibration=calibration,
            frames=frames,
        ))
    cat = _require(doc, "catalog", "manifest")
    catalog = ObjectCatalog(
        objects=[CatalogObject(o["object_id"], o["label"], o["cluster"])
                 for o in _require(cat, "objects", "catalog")],
        clusters=list(_require(cat, "clusters", "catalog")),
    )
    robots = [RobotProfile(r["robot_id"], r["prompt"], tuple(r["affordances"]),
                           bool(r.get("is_baseline", False)))
              for r in _require(doc, "robots", "manifest")]
    ground_truth = [GroundTruthLabel(g["frame"], g["robot_id"], g["object_id"],
                                     g["affordance"], bool(g["value"]))
                    for g in _require(doc, "ground_truth", "manifest")]
    return DatasetManifest(sequences=sequences, catalog=catalog, robots=robots,
                           ground_truth=ground_truth, base_dir=base_dir)


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    """Inverse of manifest_from_dict; load(save(m)) round-trips."""
    return {
        "sequences": [{
            "sequence_id": s.sequence_id,
            "frame_rate": s.frame_rate,
            "calibration": {
                "fx": s.calibration.fx, "fy": s.calibration.fy,
                "cx": s.calibration.cx, "cy": s.calibration.cy,
                "width": s.calibration.image_width, "height": s.calibration.image_height,
            },
            "frames": [{
                "index": f.frame_index,
                "timestamp": f.timestamp,
                "image": f.image_ref,
                "pose": {
                    "rotation": [float(x) for x in f.rotation.reshape(-1)],
                    "translation": [float(x) for x in f.translation],
                },
            } for f in s.frames],
        } for s in manifest.sequences],
        "catalog": {
            "objects": [{"object_id": o.object_id, "label": o.canonical_label,
                         "cluster": o.cluster_label} for o in manifest.catalog.objects],
            "clusters": list(manifest.catalog.clusters),
        },
        "robots": [{"robot_id": r.robot_id, "prompt": r.prompt,
                    "affordances": list(r.affordances), "is_baseline": r.is_baseline}
                   for r in manifest.robots],
        "ground_truth": [{"frame": g.frame_index, "robot_id": g.robot_id,
                          "object_id": g.object_id, "affordance": g.affordance,
                          "value": g.value} for g in manifest.ground_truth],
    }


def save_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest_to_dict(manifest), indent=2, sort_keys=True))


def sample_frames(sequence: Sequence, sample_rate_n: int) -> list[FrameSample]:
    """Frames whose index is a multiple of n, in order."""
    if sample_rate_n < 1:
        raise ValueError("sample_rate_n must be >= 1")
    return [f for f in sequence.frames if f.frame_index % sample_rate_n == 0]


def ground_truth_for(manifest: DatasetManifest, frame_index: int, robot_id: str
                     ) -> tuple[AnnotationSet, list[tuple[str, str]]]:
    """Positive annotations and labelled-negative pairs for one (frame, robot).

    Object ids are resolved to their canonical catalog labels. Together the
    positives and negatives enumerate the frame's labelled universe.
    """
    manifest.robot(robot_id)  # raises UnknownRobot
    positives = AnnotationSet(robot_id=robot_id, frame_index=frame_index)
    negatives: list[tuple[str, str]] = []
    for gt in manifest.ground_truth:
        if gt.frame_index != frame_index or gt.robot_id != robot_id:
            continue
        label = manifest.catalog.object_by_id(gt.object_id).canonical_label
        if gt.value:
            positives.entries.setdefault(gt.affordance, set()).add(label)
        else:
            negatives.append((gt.affordance, label))
    return positives, negatives
