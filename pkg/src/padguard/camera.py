"""Synthetic upward-looking panoramic camera.

Equidistant fisheye: a ray at zenith angle ``theta`` lands ``f * theta``
pixels from the image centre, at the ray's azimuth in the camera frame. The
field of view exceeds 180 degrees so people's feet near the horizon are
visible. Camera-frame pixel coordinates are converted to image pixels with
the inverse of ``geometry.image_to_campix``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraPose, ImageDims


@dataclass(frozen=True)
class FisheyeCameraModel:
    image_size: int = 640
    fov: float = math.radians(220.0)
    mount_height: float = 0.1
    pose: CameraPose = field(default_factory=CameraPose)
    focal: float | None = None  # pixels per radian; defaults to filling the frame

    def __post_init__(self):
        if not math.pi < self.fov <= 1.35 * math.pi:
            raise ValueError(f"fov must be in (pi, 1.35 pi], got {self.fov}")
        if self.image_size <= 0:
            raise ValueError("image_size must be positive")
        if self.focal is None:
            object.__setattr__(self, "focal", (self.image_size / 2.0) / (self.fov / 2.0))
        if self.focal * self.fov / 2.0 > self.image_size / 2.0 + 1e-9:
            raise ValueError("focal length pushes the fov circle outside the frame")

    @property
    def dims(self) -> ImageDims:
        return ImageDims(self.image_size, self.image_size)

    def project(self, points: np.ndarray):
        """Project world points (n, 3) to image pixels.

        Returns ``(uv, visible)`` where ``uv`` is (n, 2) as (x_image, y_image).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dx = pts[:, 0] - self.pose.d_x_cam
        dy = pts[:, 1] - self.pose.d_y_cam
        c, s = math.cos(self.pose.yaw_offset), math.sin(self.pose.yaw_offset)
        # world -> camera frame is the inverse yaw rotation
        xc = c * dx + s * dy
        yc = -s * dx + c * dy
        dz = pts[:, 2] - self.mount_height
        theta = np.arctan2(np.hypot(xc, yc), dz)
        az = np.arctan2(yc, xc)
        r = self.focal * theta
        x_cam = r * np.cos(az)
        y_cam = r * np.sin(az)
        half = self.image_size / 2.0
        uv = np.column_stack([half - y_cam, half - x_cam])
        return uv, theta <= self.fov / 2.0


def cylinder_samples(x: float, y: float, height: float, radius: float, n: int = 16) -> np.ndarray:
    """Sample points on a vertical cylinder: two rings (feet, head) of n/2 points."""
    k = n // 2
    a = 2.0 * math.pi * np.arange(k) / k
    ring = np.column_stack([x + radius * np.cos(a), y + radius * np.sin(a)])
    feet = np.column_stack([ring, np.zeros(k)])
    head = np.column_stack([ring, np.full(k, height)])
    return np.vstack([feet, head])


def box_from_pixels(uv: np.ndarray, image_size: int):
    """Axis-aligned box of pixel samples as normalized (cx, cy, w, h)."""
    lo = np.clip(uv.min(axis=0), 0.0, image_size)
    hi = np.clip(uv.max(axis=0), 0.0, image_size)
    return corners_to_box(lo[0], lo[1], hi[0], hi[1], image_size)


def corners_to_box(x1, y1, x2, y2, image_size):
    s = float(image_size)
    return ((x1 + x2) / 2.0 / s, (y1 + y2) / 2.0 / s, (x2 - x1) / s, (y2 - y1) / s)
