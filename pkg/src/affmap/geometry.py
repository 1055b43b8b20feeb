"""Pinhole back-projection and multi-view least-squares triangulation.

Cameras follow the rectified pinhole model with world-from-camera poses
(R, t): a pixel (u, v) back-projects to the bearing ray from the camera
center t along R @ normalize(((u-cx)/fx, (v-cy)/fy, 1)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import CameraCalibration, FrameSample, Sequence
from .errors import DegenerateGeometry, PixelOutOfBounds, TooFewRays
from .providers.types import Detection

CONDITION_RATIO = 1e-6


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray  # camera center, world frame
    direction: np.ndarray  # unit vector

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        norm = np.linalg.norm(d)
        if abs(norm - 1.0) > 1e-9:
            d = d / norm
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)

    def distance_to(self, point: np.ndarray) -> float:
        delta = np.asarray(point, dtype=float) - self.origin
        return float(np.linalg.norm(delta - (delta @ self.direction) * self.direction))


@dataclass(frozen=True)
class TriangulationResult:
    position: np.ndarray
    residual_rms: float
    ray_count: int
    condition_ok: bool


def pixel_ray(calibration: CameraCalibration, pose: FrameSample | tuple,
              pixel: tuple[float, float]) -> Ray:
    """Back-project a pixel through a world-from-camera pose."""
    u, v = pixel
    if not (0 <= u < calibration.image_width and 0 <= v < calibration.image_height):
        raise PixelOutOfBounds(f"pixel ({u}, {v}) outside "
                               f"{calibration.image_width}x{calibration.image_height}")
    if isinstance(pose, FrameSample):
        rotation, translation = pose.rotation, pose.translation
    else:
        rotation, translation = pose
        rotation = np.asarray(rotation, dtype=float).reshape(3, 3)
        translation = np.asarray(translation, dtype=float).reshape(3)
    d_cam = np.array([(u - calibration.cx) / calibration.fx,
                      (v - calibration.cy) / calibration.fy,
                      1.0])
    d_cam /= np.linalg.norm(d_cam)
    return Ray(origin=translation, direction=rotation @ d_cam)


def select_support_frames(detection_frame: int, k: int, sequence: Sequence) -> list[int]:
    """Existing frame indices among {n_i - k, n_i, n_i + k}, ascending."""
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates = (detection_frame - k, detection_frame, detection_frame + k)
    return [idx for idx in candidates if sequence.frame(idx) is not None]


def triangulate(rays: list[Ray]) -> TriangulationResult:
    """Midpoint least squares: x* minimizes sum_i |(I - d_i d_i^T)(x - o_i)|^2."""
    if len(rays) < 2:
        raise TooFewRays(f"need >= 2 rays, got {len(rays)}")
    A = np.zeros((3, 3))
    b = np.zeros(3)
    for ray in rays:
        P = np.eye(3) - np.outer(ray.direction, ray.direction)
        A += P
        b += P @ ray.origin
    svals = np.linalg.svd(A, compute_uv=False)
    condition_ok = bool(svals[-1] >= CONDITION_RATIO * svals[0])
    if not condition_ok:
        raise DegenerateGeometry(
            f"near-parallel rays (singular value ratio {svals[-1] / svals[0]:.2e})")
    position = np.linalg.solve(A, b)
    residual_rms = float(np.sqrt(
        sum(ray.distance_to(position) ** 2 for ray in rays) / len(rays)))
    return TriangulationResult(position=position, residual_rms=residual_rms,
                               ray_count=len(rays), condition_ok=condition_ok)


def localize_observation(detections_per_frame: dict[int, Detection],
                         calibration: CameraCalibration,
                         poses: dict[int, FrameSample]) -> TriangulationResult:
    """Triangulate an object from per-frame box-center detections.

    Single-view input raises TooFewRays; the caller keeps the observation as
    unlocalized rather than dropping it.
    """
    if len(detections_per_frame) < 2:
        raise TooFewRays(f"detections in {len(detections_per_frame)} frame(s)")
    rays = []
    for frame_index in sorted(detections_per_frame):
        detection = detections_per_frame[frame_index]
        pose = poses[frame_index]
        rays.append(pixel_ray(calibration, pose, detection.box.center))
    return triangulate(rays)
