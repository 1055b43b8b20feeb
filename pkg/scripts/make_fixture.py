#!/usr/bin/env python3
"""Regenerate the bundled desk-scale fixture under tests/fixtures/desk/.

Five objects at known world positions are forward-projected through three
camera poses to produce the detection script, so triangulating the scripted
boxes recovers the true positions. The mock VLM script replays the
ground-truth positives, giving an end-to-end oracle run.
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "tests" / "fixtures" / "desk"

FX = FY = 500.0
CX, CY = 320.0, 240.0
WIDTH, HEIGHT = 640, 480

OBJECTS = [
    ("obj_mug", "Mug", "Household Items", (-0.6, 0.1, 0.30)),
    ("obj_banana", "Banana", "Food", (-0.2, -0.1, 0.25)),
    ("obj_ball", "Tennis Ball", "Sports Equipment", (0.1, 0.2, 0.28)),
    ("obj_pipe", "Plastic Pipe", "Construction Items", (0.5, 0.0, 0.22)),
    ("obj_paper", "Crumpled Paper", "Litter", (0.0, -0.3, 0.20)),
]
CLUSTERS = ["Household Items", "Food", "Sports Equipment", "Construction Items", "Litter"]

CAMERA_POSITIONS = [(-0.5, -2.0, 0.5), (0.0, -2.2, 0.5), (0.5, -2.0, 0.5)]
LOOK_AT = np.array([0.0, 0.0, 0.25])

ROBOTS = [
    {
        "robot_id": "push-bot",
        "prompt": ("I am a cylindrical robot with dimensions 0.3m diameter and 0.5m "
                   "height. I can move around the world in two dimensions. I have a "
                   "mechanism which allows me to push objects larger and heavier than "
                   "myself in a forwards direction."),
        "affordances": ["Push"],
        "is_baseline": False,
    },
    {
        "robot_id": "gripper-bot",
        "prompt": ("I am a wheeled robot with a two-finger gripper arm. I can pick up "
                   "small objects, and lift objects vertically upwards as long as I "
                   "can get underneath them."),
        "affordances": ["Pick", "Lift"],
        "is_baseline": False,
    },
]

# exhaustive per-frame labels: (robot, affordance, object_id, value)
LABELS = (
    [("push-bot", "Push", oid, oid != "obj_banana") for oid, *_ in OBJECTS]
    + [("gripper-bot", "Pick", oid, oid != "obj_pipe") for oid, *_ in OBJECTS]
    + [("gripper-bot", "Lift", oid, False) for oid, *_ in OBJECTS]
)


def look_at_rotation(position):
    z = LOOK_AT - np.asarray(position)
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0])
    x = np.cross(z, up)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])  # world-from-camera


def project(rotation, translation, point):
    pc = rotation.T @ (np.asarray(point) - np.asarray(translation))
    assert pc[2] > 0
    u = FX * pc[0] / pc[2] + CX
    v = FY * pc[1] / pc[2] + CY
    assert 20 < u < WIDTH - 20 and 20 < v < HEIGHT - 20, (u, v)
    return u, v


def main():
    (OUT / "images").mkdir(parents=True, exist_ok=True)

    frames = []
    detect_script = {}
    for idx, position in enumerate(CAMERA_POSITIONS):
        rotation = look_at_rotation(position)
        image_rel = f"images/frame_{idx:03d}.png"
        Image.new("L", (16, 12), color=128 + idx).save(OUT / image_rel)
        frames.append({
            "index": idx,
            "image": image_rel,
            "pose": {
                "rotation": [float(x) for x in rotation.reshape(-1)],
                "translation": [float(x) for x in position],
            },
        })
        detections = []
        for _, label, _, point in OBJECTS:
            u, v = project(rotation, position, point)
            detections.append({
                "label": label,
                "box": [round(u - 18.0, 4), round(v - 15.0, 4),
                        round(u + 18.0, 4), round(v + 15.0, 4)],
                "score": 0.9,
            })
        detect_script[image_rel] = {"detections": detections}

    manifest = {
        "sequences": [{
            "sequence_id": "desk",
            "frame_rate": 2.0,
            "calibration": {"fx": FX, "fy": FY, "cx": CX, "cy": CY,
                            "width": WIDTH, "height": HEIGHT},
            "frames": frames,
        }],
        "catalog": {
            "objects": [{"object_id": oid, "label": label, "cluster": cluster}
                        for oid, label, cluster, _ in OBJECTS],
            "clusters": CLUSTERS,
        },
        "robots": ROBOTS,
        "ground_truth": [
            {"frame": frame, "robot_id": robot, "object_id": oid,
             "affordance": affordance, "value": value}
            for frame in range(len(frames))
            for robot, affordance, oid, value in LABELS
        ],
    }

    label_of = {oid: label for oid, label, _, _ in OBJECTS}
    vlm_script = {}
    for frame in frames:
        for robot in ROBOTS:
            positives = {}
            for rid, affordance, oid, value in LABELS:
                if rid == robot["robot_id"] and value:
                    positives.setdefault(affordance, []).append(label_of[oid])
            key = f"{frame['image']}::{robot['robot_id']}"
            vlm_script[key] = json.dumps(positives)

    config = {
        "manifest_path": "manifest.json",
        "output_dir": "out",
        "sample_rate_n": 1,
        "support_k": 1,
        "tau": 0.45,
        "distance_d": 0.1,
        "trials": 5,
        "mock_vlm": "mock_vlm.json",
        "mock_detect": "mock_detect.json",
        "embed": "test",
    }

    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (OUT / "mock_detect.json").write_text(json.dumps(detect_script, indent=2) + "\n")
    (OUT / "mock_vlm.json").write_text(json.dumps(vlm_script, indent=2) + "\n")
    (OUT / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    (OUT / "object_positions.json").write_text(json.dumps(
        {label: list(point) for _, label, _, point in OBJECTS}, indent=2) + "\n")
    print(f"fixture written to {OUT}")


if __name__ == "__main__":
    main()
