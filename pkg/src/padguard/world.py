"""Pedestrians, UAV kinematics and the synthetic person detector."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import FisheyeCameraModel, box_from_pixels, corners_to_box, cylinder_samples
from .distance import BBoxFeatures
from .messaging import Box, BoundingBoxesDist
from .mission import LAND

DEFAULT_HEIGHT = 1.7
DEFAULT_RADIUS = 0.05
N_SAMPLES = 16


@dataclass(frozen=True)
class Pedestrian:
    id: str
    waypoints: tuple  # ((t, x, y), ...) sorted by t
    height: float = DEFAULT_HEIGHT
    radius: float = DEFAULT_RADIUS

    def __post_init__(self):
        wps = tuple(tuple(map(float, w)) for w in self.waypoints)
        if not wps:
            raise ValueError(f"pedestrian {self.id} has no waypoints")
        if any(b[0] < a[0] for a, b in zip(wps, wps[1:])):
            raise ValueError(f"pedestrian {self.id} waypoints must be time-ordered")
        if not 1.4 <= self.height <= 2.1:
            raise ValueError(f"pedestrian {self.id} height {self.height} outside [1.4, 2.1] m")
        object.__setattr__(self, "waypoints", wps)

    def position(self, t: float) -> tuple[float, float]:
        """Piecewise-linear position, held at the ends."""
        wps = self.waypoints
        if t <= wps[0][0]:
            return wps[0][1], wps[0][2]
        for (t0, x0, y0), (t1, x1, y1) in zip(wps, wps[1:]):
            if t <= t1:
                u = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
                return x0 + u * (x1 - x0), y0 + u * (y1 - y0)
        return wps[-1][1], wps[-1][2]


@dataclass(frozen=True)
class NoiseModel:
    pixel_sigma: float = 1.0
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0

    def __post_init__(self):
        if self.pixel_sigma < 0:
            raise ValueError("pixel_sigma must be >= 0")
        for name in ("miss_rate", "false_positive_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


def project_person(cam: FisheyeCameraModel, p: Pedestrian, t: float):
    """Noise-free box of a pedestrian at time ``t`` or ``None`` if not visible."""
    x, y = p.position(t)
    return project_at(cam, x, y, p.height, p.radius)


def project_at(cam: FisheyeCameraModel, x: float, y: float, height: float = DEFAULT_HEIGHT, radius: float = DEFAULT_RADIUS):
    uv, vis = cam.project(cylinder_samples(x, y, height, radius, N_SAMPLES))
    if not vis.any():
        return None
    return BBoxFeatures(*box_from_pixels(uv[vis], cam.image_size))


def perturb_box(f: BBoxFeatures, sigma: float, image_size: int, rng) -> BBoxFeatures:
    """Gaussian noise (pixels) on the box corners, re-clipped to the frame."""
    s = float(image_size)
    x1, x2 = (f.cx - f.w / 2) * s, (f.cx + f.w / 2) * s
    y1, y2 = (f.cy - f.h / 2) * s, (f.cy + f.h / 2) * s
    if sigma > 0:
        x1, y1, x2, y2 = np.array([x1, y1, x2, y2]) + rng.normal(0.0, sigma, 4)
    x1, x2 = sorted((x1, x2))
    y1, y2 = sorted((y1, y2))
    x1, x2 = np.clip([x1, x2], 0.0, s)
    y1, y2 = np.clip([y1, y2], 0.0, s)
    return BBoxFeatures(*corners_to_box(x1, y1, x2, y2, image_size))


def ground_distance(cam: FisheyeCameraModel, x: float, y: float) -> float:
    return math.hypot(x - cam.pose.d_x_cam, y - cam.pose.d_y_cam)


def synth_detections(cam, pedestrians, noise: NoiseModel, t: float, seq: int, rng, distance_fn):
    """One detector frame.

    ``distance_fn(features, truth_m) -> metres`` supplies the distance field
    (trained model or ground truth). Returns ``(message, sources)`` where
    ``sources[i]`` is the pedestrian id behind box ``i`` (``None`` for false
    positives); sources never go on the wire.
    """
    feats, truths, sources = [], [], []
    for p in pedestrians:
        f = project_person(cam, p, t)
        miss = rng.random() < noise.miss_rate
        if f is None or miss:
            continue
        feats.append(perturb_box(f, noise.pixel_sigma, cam.image_size, rng))
        truths.append(ground_distance(cam, *p.position(t)))
        sources.append(p.id)
    if noise.false_positive_rate > 0 and rng.random() < noise.false_positive_rate:
        r = 0.45 * math.sqrt(rng.random())
        a = rng.uniform(0, 2 * math.pi)
        w, h = rng.uniform(0.01, 0.08, 2)
        cx = min(max(0.5 + r * math.cos(a), w / 2), 1 - w / 2)
        cy = min(max(0.5 + r * math.sin(a), h / 2), 1 - h / 2)
        feats.append(BBoxFeatures(cx, cy, w, h))
        truths.append(None)
        sources.append(None)
    boxes = []
    for f, truth in zip(feats, truths):
        conf = rng.uniform(0.3, 0.6) if truth is None else rng.uniform(0.7, 0.99)
        d = float(distance_fn(f, truth))
        boxes.append(Box(f.cx, f.cy, f.w, f.h, float(conf), max(d, 0.0)))
    return BoundingBoxesDist(seq=seq, stamp=float(t), boxes=tuple(boxes)), sources


def synthetic_dataset(
    n: int,
    seed: int,
    cam: FisheyeCameraModel | None = None,
    pixel_sigma: float = 1.0,
    d_range=(0.5, 5.5),
    height_range=(1.4, 2.1),
    radius: float = DEFAULT_RADIUS,
):
    """Labelled (features, distance) pairs from random placements around the camera."""
    cam = cam or FisheyeCameraModel()
    rng = np.random.default_rng(seed)
    X, y = [], []
    while len(y) < n:
        d = rng.uniform(*d_range)
        a = rng.uniform(0, 2 * math.pi)
        h = rng.uniform(*height_range)
        x = cam.pose.d_x_cam + d * math.cos(a)
        yy = cam.pose.d_y_cam + d * math.sin(a)
        f = project_at(cam, x, yy, h, radius)
        if f is None:
            continue
        f = perturb_box(f, pixel_sigma, cam.image_size, rng)
        X.append(f.as_array())
        y.append(d)
    return np.array(X), np.array(y)


# -- UAV ----------------------------------------------------------------------


@dataclass(frozen=True)
class UavState:
    position: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class UavDynamics:
    gain: float = 1.5
    v_max: float = 1.5
    v_land: float = 0.5


def step_uav(state: UavState, setpoint, dt: float, dyn: UavDynamics = UavDynamics()) -> UavState:
    """First-order position tracking with a speed clamp; ``LAND`` descends in place."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    pos = np.array(state.position, dtype=float)
    if setpoint is LAND:
        vz = -dyn.v_land if pos[2] > 0 else 0.0
        v = np.array([0.0, 0.0, vz])
        new = pos + v * dt
        if new[2] <= 0.0:
            new[2] = 0.0
            v[2] = -pos[2] / dt
    else:
        target = np.array([setpoint.x, setpoint.y, setpoint.z])
        v = dyn.gain * (target - pos)
        speed = float(np.linalg.norm(v))
        if speed > dyn.v_max:
            v = v * (dyn.v_max / speed)
        new = pos + v * dt
        new[2] = max(new[2], 0.0)
    return UavState(tuple(float(c) for c in new), tuple(float(c) for c in v))
