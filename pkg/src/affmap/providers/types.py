"""Request/response value types shared by the provider clients."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class VlmRequest:
    image: bytes
    system_prompt: str
    instruction: str
    model_id: str = "default"
    # optional routing metadata: used by scripted mocks and cache salting
    image_ref: str = ""
    robot_id: str = ""
    trial_salt: int = 0

    def __post_init__(self):
        if not self.image:
            raise ValueError("VlmRequest.image must be non-empty")
        if not self.system_prompt or not self.instruction:
            raise ValueError("VlmRequest prompts must be non-empty")


@dataclass(frozen=True)
class Box:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self}")

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)


@dataclass(frozen=True)
class Detection:
    label: str
    box: Box
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"detection score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class DetectionQuery:
    image: bytes
    labels: tuple[str, ...]
    box_threshold: float = 0.3
    image_ref: str = ""

    def __post_init__(self):
        if not self.labels:
            raise ValueError("DetectionQuery.labels must be non-empty")
        if not (0.0 <= self.box_threshold <= 1.0):
            raise ValueError("box_threshold outside [0, 1]")


def clamp_box(x_min: float, y_min: float, x_max: float, y_max: float,
              width: int, height: int) -> Box:
    """Clamp raw box coordinates to image bounds."""
    return Box(
        x_min=max(0.0, min(float(x_min), width - 1.0)),
        y_min=max(0.0, min(float(y_min), height - 1.0)),
        x_max=max(0.0, min(float(x_max), float(width))),
        y_max=max(0.0, min(float(y_max), float(height))),
    )
