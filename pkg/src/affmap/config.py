"""Run configuration with the experiment defaults."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

DEFAULT_SAMPLE_RATE_N = 24
DEFAULT_TAU = 0.45
DEFAULT_DISTANCE_D = 0.1
DEFAULT_TRIALS = 5


@dataclass(frozen=True)
class RunConfig:
    manifest_path: str = ""
    robot_ids: tuple[str, ...] = ()  # empty = all robots in the manifest
    output_dir: str = "out"
    sample_rate_n: int = DEFAULT_SAMPLE_RATE_N
    support_k: Optional[int] = None  # None = round(0.5 * frame_rate)
    tau: float = DEFAULT_TAU
    distance_d: float = DEFAULT_DISTANCE_D
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    mock_vlm: Optional[str] = None
    mock_detect: Optional[str] = None
    embed: str = "test"  # "test", "service", or a scripted-embedding JSON path
    vlm_model: Optional[str] = None

    def __post_init__(self):
        if not (0.0 < self.tau < 1.0):
            raise ValueError("tau must be in (0, 1)")
        if self.distance_d <= 0:
            raise ValueError("distance_d must be > 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.sample_rate_n < 1:
            raise ValueError("sample_rate_n must be >= 1")

    def support_k_for(self, frame_rate: float) -> int:
        if self.support_k is not None:
            return self.support_k
        return max(1, round(0.5 * frame_rate))


def load_config(path) -> RunConfig:
    doc = json.loads(Path(path).read_text())
    known = RunConfig.__dataclass_fields__
    unknown = set(doc) - set(known)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "robot_ids" in doc:
        doc["robot_ids"] = tuple(doc["robot_ids"])
    return RunConfig(**doc)


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    set_overrides = {k: v for k, v in overrides.items() if v is not None}
    if "robot_ids" in set_overrides:
        set_overrides["robot_ids"] = tuple(set_overrides["robot_ids"])
    return replace(config, **set_overrides) if set_overrides else config
