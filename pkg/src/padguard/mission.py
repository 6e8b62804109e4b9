"""Safe-landing flight state machine.

Flight modes run TAKEOFF -> MISSION -> PRELANDING -> LANDING. During
pre-landing, any detection within the scan radius raises the emergency flag
and the vehicle retreats (climbs) and hovers. Once the number of in-zone
messages reaches ``danger_threshold`` the people in the triggering message are
localized, an emergency landing offset is solved for, and the pre-landing
point is shifted once.

Message callbacks may arrive from any thread: ``Controller.submit`` only
enqueues, and ``Controller.step`` (the control loop) drains and applies them
before advancing modes and emitting the setpoint.
"""

from __future__ import annotations

import enum
import logging
import math
import queue
from dataclasses import dataclass, field, replace
from typing import Optional

from . import landing
from .geometry import CameraPose, ImageDims, localize_box
from .messaging import BoundingBoxesDist, MessageError, validate

logger = logging.getLogger(__name__)


class FlightMode(str, enum.Enum):
    TAKEOFF = "TAKEOFF"
    MISSION = "MISSION"
    PRELANDING = "PRELANDING"
    LANDING = "LANDING"


@dataclass(frozen=True)
class Setpoint:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.z < 0:
            raise ValueError("setpoint altitude must be >= 0")

    def as_list(self):
        return [self.x, self.y, self.z]


class LandCommand:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "LAND"


LAND = LandCommand()


@dataclass(frozen=True)
class ControllerConfig:
    params: landing.LandingParams = landing.LandingParams()
    camera: CameraPose = CameraPose()
    image: ImageDims = ImageDims(640, 640)
    takeoff_altitude: float = 2.0
    prelanding_altitude: float = 3.0
    retreat_climb: float = 2.0
    danger_threshold: int = 150
    clear_after: int = 30
    literal: bool = False
    takeoff_tolerance: float = 0.1
    waypoint_radius: float = 0.15
    landing_tolerance: float = 0.02
    prelanding_dwell: float = 2.0
    solver: landing.SolverConfig = landing.SolverConfig()


@dataclass(frozen=True)
class ControllerState:
    mode: FlightMode
    takeoff_position: tuple
    prelanding_pos: tuple
    retreat_pos: tuple
    mission_setpoints: tuple = ()
    wp_index: int = 0
    emergency: bool = False
    emergency_landing: bool = False
    danger_counter: int = 0
    clear_streak: int = 0
    force_emergency: bool = False
    arrived_at: Optional[float] = None
    shifts: int = 0
    people_snapshot: tuple = ()
    solution: Optional[landing.LandingSolution] = None
    dropped_messages: int = 0
    ignored_messages: int = 0


def initial_state(cfg: ControllerConfig, home_xy=(0.0, 0.0), waypoints=(), pad_xy=None) -> ControllerState:
    pad = (cfg.camera.d_x_cam, cfg.camera.d_y_cam) if pad_xy is None else tuple(pad_xy)
    pre = (float(pad[0]), float(pad[1]), cfg.prelanding_altitude)
    return ControllerState(
        mode=FlightMode.TAKEOFF,
        takeoff_position=(float(home_xy[0]), float(home_xy[1]), cfg.takeoff_altitude),
        prelanding_pos=pre,
        retreat_pos=(pre[0], pre[1], pre[2] + cfg.retreat_climb),
        mission_setpoints=tuple(tuple(map(float, w)) for w in waypoints),
    )


def _dist(a, b) -> float:
    return math.dist(a, b)


def on_bbox_message(state: ControllerState, msg: BoundingBoxesDist, cfg: ControllerConfig) -> ControllerState:
    try:
        validate(msg)
    except MessageError as exc:
        logger.warning("dropping malformed detection message: %s", exc)
        return replace(state, dropped_messages=state.dropped_messages + 1)
    if state.mode is not FlightMode.PRELANDING:
        return replace(state, ignored_messages=state.ignored_messages + 1)

    r_s = cfg.params.r_s
    in_zone = [b for b in msg.boxes if b.dist <= r_s]
    s = state
    if in_zone:
        s = replace(s, emergency=True, danger_counter=s.danger_counter + 1, clear_streak=0)
    else:
        s = replace(s, clear_streak=s.clear_streak + 1)
        if (
            not cfg.literal
            and s.emergency
            and not s.emergency_landing
            and s.clear_streak >= cfg.clear_after
        ):
            s = replace(s, emergency=False, danger_counter=0)

    if (s.danger_counter >= cfg.danger_threshold or s.force_emergency) and not s.emergency_landing:
        people = [localize_box(b.cx, b.cy, b.dist, cfg.image, cfg.camera) for b in in_zone]
        problem = landing.LandingProblem(people, cfg.camera.position, cfg.params)
        sol = landing.solve(problem, config=cfg.solver)
        px, py, pz = s.prelanding_pos
        s = replace(
            s,
            prelanding_pos=(px + sol.offset.x, py + sol.offset.y, pz),
            emergency_landing=True,
            shifts=s.shifts + 1,
            people_snapshot=tuple((p.x, p.y) for p in people),
            solution=sol,
            arrived_at=None,
        )
        logger.info("emergency landing offset (%.3f, %.3f), fallback=%s", sol.offset.x, sol.offset.y, sol.fallback_used)
    return s


def force_emergency(state: ControllerState) -> ControllerState:
    """Request an immediate emergency landing on the next detection message."""
    return replace(state, force_emergency=True)


def mode_advance(state: ControllerState, vehicle_position, t: float, cfg: ControllerConfig) -> ControllerState:
    s = state
    if s.mode is FlightMode.TAKEOFF:
        if _dist(vehicle_position, s.takeoff_position) <= cfg.takeoff_tolerance:
            s = replace(s, mode=FlightMode.MISSION)
    if s.mode is FlightMode.MISSION:
        wps = s.mission_setpoints
        if s.wp_index < len(wps) and _dist(vehicle_position, wps[s.wp_index]) <= cfg.waypoint_radius:
            s = replace(s, wp_index=s.wp_index + 1)
        if s.wp_index >= len(wps):
            s = replace(s, mode=FlightMode.PRELANDING, arrived_at=None)
    if s.mode is FlightMode.PRELANDING:
        if s.emergency and not s.emergency_landing:
            return replace(s, arrived_at=None)
        if _dist(vehicle_position, s.prelanding_pos) > cfg.landing_tolerance:
            return replace(s, arrived_at=None)
        if s.emergency_landing:
            return replace(s, mode=FlightMode.LANDING)
        if s.arrived_at is None:
            return replace(s, arrived_at=t)
        if t - s.arrived_at >= cfg.prelanding_dwell - 1e-9:
            return replace(s, mode=FlightMode.LANDING)
    return s


def tick(state: ControllerState):
    """Setpoint for the current mode (``LAND`` in LANDING)."""
    m = state.mode
    if m is FlightMode.TAKEOFF:
        return Setpoint(*state.takeoff_position)
    if m is FlightMode.MISSION:
        if state.wp_index < len(state.mission_setpoints):
            return Setpoint(*state.mission_setpoints[state.wp_index])
        return Setpoint(*state.prelanding_pos)
    if m is FlightMode.PRELANDING:
        if state.emergency and not state.emergency_landing:
            return Setpoint(*state.retreat_pos)  # hover and wait
        return Setpoint(*state.prelanding_pos)
    return LAND


def setpoint_repr(sp):
    return "LAND" if sp is LAND else sp.as_list()


@dataclass
class Controller:
    cfg: ControllerConfig
    state: ControllerState
    log: list = field(default_factory=list)

    def __post_init__(self):
        self._inbox = queue.SimpleQueue()
        self._last_key = None

    def submit(self, msg: BoundingBoxesDist) -> None:
        self._inbox.put(msg)

    def request_emergency(self) -> None:
        self._inbox.put(_FORCE)

    def step(self, t: float, vehicle_position, messages=()):
        for m in messages:
            self._inbox.put(m)
        while True:
            try:
                item = self._inbox.get_nowait()
            except queue.Empty:
                break
            if item is _FORCE:
                self.state = force_emergency(self.state)
                continue
            self.state = on_bbox_message(self.state, item, self.cfg)
        self.state = mode_advance(self.state, vehicle_position, t, self.cfg)
        sp = tick(self.state)
        self._record(t, sp)
        return sp

    def _record(self, t, sp):
        s = self.state
        key = (s.mode, s.emergency, s.emergency_landing, s.danger_counter, setpoint_repr(sp))
        if key != self._last_key:
            self._last_key = key
            self.log.append(
                {
                    "t": round(t, 9),
                    "mode": s.mode.value,
                    "emergency": s.emergency,
                    "emergency_landing": s.emergency_landing,
                    "danger_counter": s.danger_counter,
                    "setpoint": setpoint_repr(sp),
                }
            )


_FORCE = object()
