"""Image, camera and world frame transforms for the upward-facing ground camera.

Image coordinates have their origin in the top-left corner, x to the right and
y downward. Camera pixel coordinates are centred on the optical axis with the
axes swapped and flipped relative to the image (x_cam = -y_img + w/2,
y_cam = -x_img + h/2). That pairing is only self-consistent on a square frame,
so non-square dimensions are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS_PIX = 1e-6


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class ImagePoint:
    x_image: float
    y_image: float


@dataclass(frozen=True)
class ImageDims:
    w_image: float
    h_image: float

    def __post_init__(self):
        if not (self.w_image > 0 and self.h_image > 0):
            raise GeometryError(f"image dims must be positive, got {self.w_image}x{self.h_image}")
        if self.w_image != self.h_image:
            raise GeometryError(
                f"camera frame must be square, got {self.w_image}x{self.h_image}"
            )


@dataclass(frozen=True)
class CamPixPoint:
    x_cam_pix: float
    y_cam_pix: float

    def norm(self) -> float:
        return math.hypot(self.x_cam_pix, self.y_cam_pix)


@dataclass(frozen=True)
class CameraPose:
    d_x_cam: float = 0.0
    d_y_cam: float = 0.0
    yaw_offset: float = 0.0  # radians, world heading of the camera +x axis

    def __post_init__(self):
        if not (-math.pi <= self.yaw_offset < math.pi):
            raise GeometryError(f"yaw_offset must lie in [-pi, pi), got {self.yaw_offset}")

    @property
    def position(self) -> "WorldPoint2D":
        return WorldPoint2D(self.d_x_cam, self.d_y_cam)


@dataclass(frozen=True)
class WorldPoint2D:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite world point ({self.x}, {self.y})")

    def __add__(self, other: "WorldPoint2D") -> "WorldPoint2D":
        return WorldPoint2D(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "WorldPoint2D") -> "WorldPoint2D":
        return WorldPoint2D(self.x - other.x, self.y - other.y)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


def wrap_angle(a: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    w = (a + math.pi) % (2.0 * math.pi) - math.pi
    return -math.pi if w >= math.pi else w


def image_to_campix(p: ImagePoint, dims: ImageDims) -> CamPixPoint:
    if not (0.0 <= p.x_image <= dims.w_image and 0.0 <= p.y_image <= dims.h_image):
        raise GeometryError(f"image point {p} outside {dims.w_image}x{dims.h_image} frame")
    return CamPixPoint(-p.y_image + dims.w_image / 2.0, -p.x_image + dims.h_image / 2.0)


def campix_to_image(p: CamPixPoint, dims: ImageDims) -> ImagePoint:
    return ImagePoint(dims.h_image / 2.0 - p.y_cam_pix, dims.w_image / 2.0 - p.x_cam_pix)


def rotate_to_world(p: CamPixPoint, yaw_offset: float) -> CamPixPoint:
    c, s = math.cos(yaw_offset), math.sin(yaw_offset)
    return CamPixPoint(c * p.x_cam_pix - s * p.y_cam_pix, s * p.x_cam_pix + c * p.y_cam_pix)


def localize_person(box_center: CamPixPoint, d_pred: float, cam: CameraPose) -> WorldPoint2D:
    """Place a detection at ``d_pred`` metres from the camera along the box-centre bearing.

    A box centre within ``EPS_PIX`` of the optical axis has no bearing; the
    person is then reported at the camera position, the conservative reading.
    """
    if d_pred < 0 or not math.isfinite(d_pred):
        raise GeometryError(f"distance must be finite and >= 0, got {d_pred}")
    if cam.yaw_offset != 0.0:
        box_center = rotate_to_world(box_center, cam.yaw_offset)
    n = box_center.norm()
    if n <= EPS_PIX:
        return cam.position
    return WorldPoint2D(
        d_pred * box_center.x_cam_pix / n + cam.d_x_cam,
        d_pred * box_center.y_cam_pix / n + cam.d_y_cam,
    )


def localize_box(cx: float, cy: float, dist: float, dims: ImageDims, cam: CameraPose) -> WorldPoint2D:
    """Localize a normalized box centre (as carried on the wire) in the world frame."""
    p = ImagePoint(cx * dims.w_image, cy * dims.h_image)
    return localize_person(image_to_campix(p, dims), dist, cam)
