import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from affmap.dataset import (
    AnnotationSet,
    ground_truth_for,
    load_manifest,
    manifest_from_dict,
    sample_frames,
    save_manifest,
)
from affmap.errors import ParseError, UnknownRobot, ValidationError

IDENTITY_POSE = {"rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1], "translation": [0, 0, 0]}


def minimal_manifest_doc(n_frames=1, ground_truth=None):
    return {
        "sequences": [{
            "sequence_id": "s0",
            "frame_rate": 24.0,
            "calibration": {"fx": 500, "fy": 500, "cx": 320, "cy": 240,
                            "width": 640, "height": 480},
            "frames": [{"index": i, "image": f"im_{i}.png", "pose": IDENTITY_POSE}
                       for i in range(n_frames)],
        }],
        "catalog": {"objects": [{"object_id": "o1", "label": "crate",
                                 "cluster": "Construction Items"}],
                    "clusters": ["Construction Items"]},
        "robots": [{"robot_id": "r1", "prompt": "I push things.",
                    "affordances": ["Push"], "is_baseline": False}],
        "ground_truth": ground_truth or [],
    }


def test_minimal_manifest_valid():
    manifest = manifest_from_dict(minimal_manifest_doc())
    assert len(manifest.sequences) == 1
    assert len(manifest.ground_truth) == 0


def test_ground_truth_frame_not_found():
    doc = minimal_manifest_doc(ground_truth=[
        {"frame": 999, "robot_id": "r1", "object_id": "o1",
         "affordance": "Push", "value": True}])
    with pytest.raises(ValidationError, match="999"):
        manifest_from_dict(doc)


def test_ground_truth_affordance_outside_vocabulary():
    doc = minimal_manifest_doc(ground_truth=[
        {"frame": 0, "robot_id": "r1", "object_id": "o1",
         "affordance": "Fly", "value": True}])
    with pytest.raises(ValidationError, match="Fly"):
        manifest_from_dict(doc)


def test_malformed_document_is_parse_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_manifest(path)


def test_bad_rotation_rejected():
    doc = minimal_manifest_doc()
    doc["sequences"][0]["frames"][0]["pose"] = {
        "rotation": [2, 0, 0, 0, 1, 0, 0, 0, 1], "translation": [0, 0, 0]}
    with pytest.raises(ValidationError, match="orthonormal"):
        manifest_from_dict(doc)


def test_desk_fixture_counts(desk_manifest):
    # frozen from an independent count over the fixture JSON
    assert len(desk_manifest.catalog.objects) == 5
    assert len(desk_manifest.robots) == 2
    assert len(desk_manifest.sequences[0].frames) == 3
    assert len(desk_manifest.ground_truth) == 45
    assert set(desk_manifest.catalog.clusters) == {
        "Household Items", "Food", "Sports Equipment", "Construction Items", "Litter"}


def test_sample_frames_paper_rate():
    seq = manifest_from_dict(minimal_manifest_doc(n_frames=72)).sequences[0]
    assert [f.frame_index for f in sample_frames(seq, 24)] == [0, 24, 48]


def test_sample_frames_identity():
    seq = manifest_from_dict(minimal_manifest_doc(n_frames=10)).sequences[0]
    assert sample_frames(seq, 1) == seq.frames


def test_sample_frames_short_sequence():
    seq = manifest_from_dict(minimal_manifest_doc(n_frames=10)).sequences[0]
    assert [f.frame_index for f in sample_frames(seq, 24)] == [0]


@given(n=st.integers(1, 30), length=st.integers(0, 60))
def test_sample_frames_is_deterministic_subsequence(n, length):
    seq = manifest_from_dict(minimal_manifest_doc(n_frames=max(length, 1))).sequences[0]
    sampled = sample_frames(seq, n)
    assert sampled == sample_frames(seq, n)
    it = iter(seq.frames)
    assert all(f in it for f in sampled)  # order-preserving subsequence
    assert all(f.frame_index % n == 0 for f in sampled)


def test_ground_truth_partition():
    doc = minimal_manifest_doc(ground_truth=[
        {"frame": 0, "robot_id": "r1", "object_id": "o1",
         "affordance": "Push", "value": True}])
    doc["catalog"]["objects"].append(
        {"object_id": "o2", "label": "ball", "cluster": "Construction Items"})
    doc["ground_truth"].append(
        {"frame": 0, "robot_id": "r1", "object_id": "o2",
         "affordance": "Push", "value": False})
    manifest = manifest_from_dict(doc)
    positives, negatives = ground_truth_for(manifest, 0, "r1")
    assert positives.entries == {"Push": {"crate"}}
    assert negatives == [("Push", "ball")]


def test_ground_truth_empty_frame():
    manifest = manifest_from_dict(minimal_manifest_doc())
    positives, negatives = ground_truth_for(manifest, 0, "r1")
    assert positives.entries == {}
    assert negatives == []


def test_ground_truth_unknown_robot():
    manifest = manifest_from_dict(minimal_manifest_doc())
    with pytest.raises(UnknownRobot):
        ground_truth_for(manifest, 0, "nope")


def test_desk_fixture_frame0_pushbot(desk_manifest):
    # hand-enumerated from the fixture labels
    positives, negatives = ground_truth_for(desk_manifest, 0, "push-bot")
    assert positives.entries == {
        "Push": {"Mug", "Tennis Ball", "Plastic Pipe", "Crumpled Paper"}}
    assert negatives == [("Push", "Banana")]


def test_desk_fixture_partition_property(desk_manifest):
    for frame in (0, 1, 2):
        for robot in desk_manifest.robots:
            positives, negatives = ground_truth_for(desk_manifest, frame, robot.robot_id)
            universe = {(a, o) for a, objs in positives.entries.items() for o in objs}
            assert not universe & set(negatives)
            rows = [g for g in desk_manifest.ground_truth
                    if g.frame_index == frame and g.robot_id == robot.robot_id]
            assert len(universe) + len(negatives) == len(rows)


def test_manifest_round_trip(desk_manifest, tmp_path):
    path = tmp_path / "roundtrip.json"
    save_manifest(desk_manifest, path)
    reloaded = load_manifest(path)
    save_manifest(reloaded, tmp_path / "roundtrip2.json")
    assert (tmp_path / "roundtrip.json").read_text() == \
        (tmp_path / "roundtrip2.json").read_text()


def test_timestamps_derived_from_frame_rate(desk_manifest):
    frames = desk_manifest.sequences[0].frames
    assert frames[1].timestamp == pytest.approx(1 / 2.0)
