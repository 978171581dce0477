"""Pinhole camera model and line-of-sight ray construction.

Normalized 2D landmarks are accurate in the image plane, so the direction
from the camera focal point through a landmark's pixel is a strong
constraint on the 3D joint. This module turns normalized coordinates into
unit rays in the camera frame (x right, y down, z forward).

Intrinsics are rarely published alongside landmark streams, so the default
camera assumes a centered principal point and derives the focal length
from a configurable horizontal field of view (60 degrees, a typical
consumer webcam).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

NORMALIZED_RANGE = (-0.5, 1.5)  # tolerated slightly-out-of-frame estimates


@dataclass(frozen=True)
class CameraModel:
    focal_length: float                 # pixels
    principal_point: tuple[float, float]
    image_size: tuple[int, int]         # (width, height)

    def __post_init__(self):
        if self.focal_length <= 0:
            raise ConfigError("focal_length must be positive")
        w, h = self.image_size
        cx, cy = self.principal_point
        if not (0 <= cx <= w and 0 <= cy <= h):
            raise ConfigError("principal point must lie inside the image")

    @staticmethod
    def from_fov(fov_deg: float = 60.0, image_size: tuple[int, int] = (1280, 720)) -> "CameraModel":
        if not (0 < fov_deg < 180):
            raise ConfigError("horizontal FOV must be in (0, 180) degrees")
        w, h = image_size
        focal = (w / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
        return CameraModel(focal_length=focal, principal_point=(w / 2.0, h / 2.0), image_size=(w, h))


@dataclass(frozen=True)
class LosFrame:
    """Per-joint unit rays from the focal point, plus the frame's visibilities."""

    directions: np.ndarray   # (J, 3) unit vectors, z > 0
    visibility: np.ndarray   # (J,)
    out_of_range: np.ndarray # (J,) bool, normalized input fell outside tolerance


def build_los(normalized: np.ndarray, camera: CameraModel,
              visibility: np.ndarray | None = None) -> LosFrame:
    """Unit line-of-sight vectors for one frame of normalized landmarks.

    A landmark at normalized (u, v) maps to pixel (u*width, v*height); the
    ray direction before normalization is ((px-cx)/f, (py-cy)/f, 1).
    Out-of-tolerance inputs are clamped and flagged rather than rejected.
    """
    norm = np.asarray(normalized, dtype=np.float64)
    if norm.ndim != 2 or norm.shape[1] != 2:
        raise ValueError(f"normalized landmarks must be (J, 2), got {norm.shape}")
    lo, hi = NORMALIZED_RANGE
    out_of_range = np.any((norm < lo) | (norm > hi), axis=1)
    clamped = np.clip(norm, lo, hi)

    w, h = camera.image_size
    cx, cy = camera.principal_point
    px = clamped[:, 0] * w
    py = clamped[:, 1] * h
    d = np.empty((norm.shape[0], 3), dtype=np.float64)
    d[:, 0] = (px - cx) / camera.focal_length
    d[:, 1] = (py - cy) / camera.focal_length
    d[:, 2] = 1.0
    d /= np.linalg.norm(d, axis=1, keepdims=True)

    if visibility is None:
        vis = np.ones(norm.shape[0], dtype=np.float64)
    else:
        vis = np.asarray(visibility, dtype=np.float64)
    return LosFrame(directions=d, visibility=vis, out_of_range=out_of_range)


def project_to_normalized(points_cam: np.ndarray, camera: CameraModel) -> np.ndarray:
    """Project camera-frame points to normalized image coordinates.

    Raises ValueError for points at or behind the focal plane; the synthetic
    generator treats that as a script error.
    """
    pts = np.asarray(points_cam, dtype=np.float64)
    if np.any(pts[:, 2] <= 0):
        raise ValueError("point at or behind the camera focal plane")
    w, h = camera.image_size
    cx, cy = camera.principal_point
    px = camera.focal_length * pts[:, 0] / pts[:, 2] + cx
    py = camera.focal_length * pts[:, 1] / pts[:, 2] + cy
    return np.stack([px / w, py / h], axis=1)
