"""Scenario files (YAML or JSON) and their validation.

Schema (all lengths in metres, angles in degrees at this boundary only)::

    id: str
    seed: int                      # optional here, but a run needs one
    duration: float                # simulated seconds
    message_rate_hz: int           # <= 30
    control_rate_hz: int
    transport: inprocess | udp
    camera:  {image_size, fov_deg, mount_height, x, y, yaw_deg}
    landing: {r_l, r_s, r_d, alpha}
    noise:   {pixel_sigma, miss_rate, false_positive_rate}
    controller: {danger_threshold, clear_after, literal, takeoff_altitude,
                 prelanding_altitude, retreat_climb, prelanding_dwell,
                 landing_tolerance, waypoint_radius, takeoff_tolerance}
    uav: {gain, v_max, v_land}
    mission: {home: [x, y], waypoints: [[x, y, z], ...]}
    pedestrians: [{id, height, radius, waypoints: [[t, x, y], ...]}]
    distance_model: {kind: gbdt, samples, seed} | {kind: oracle} | {kind: file, path}
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .camera import FisheyeCameraModel
from .geometry import CameraPose, wrap_angle
from .landing import LandingParams
from .messaging import RATE_CAP_HZ
from .mission import ControllerConfig
from .world import NoiseModel, Pedestrian, UavDynamics

DEFAULTS = {
    "duration": 60.0,
    "message_rate_hz": 30,
    "control_rate_hz": 20,
    "transport": "inprocess",
    "camera": {"image_size": 640, "fov_deg": 220.0, "mount_height": 0.1, "x": 0.0, "y": 0.0, "yaw_deg": 0.0},
    "landing": {"r_l": 1.0, "r_s": 3.0, "r_d": 0.5, "alpha": 0.0},
    "noise": {"pixel_sigma": 1.0, "miss_rate": 0.0, "false_positive_rate": 0.0},
    "controller": {
        "danger_threshold": 150,
        "clear_after": 30,
        "literal": False,
        "takeoff_altitude": 2.0,
        "prelanding_altitude": 3.0,
        "retreat_climb": 2.0,
        "prelanding_dwell": 3.0,
        "landing_tolerance": 0.02,
        "waypoint_radius": 0.15,
        "takeoff_tolerance": 0.1,
    },
    "uav": {"gain": 1.5, "v_max": 1.5, "v_land": 0.5},
    "mission": {"home": [0.0, 0.0], "waypoints": []},
    "pedestrians": [],
    "distance_model": {"kind": "gbdt", "samples": 5000, "seed": 0},
}
TOP_KEYS = set(DEFAULTS) | {"id", "seed"}


class ScenarioError(ValueError):
    def __init__(self, msg, path=(), line=None, source=None):
        self.msg = msg
        self.path = tuple(path)
        self.line = line
        where = ".".join(str(p) for p in path)
        loc = f"{source or '<scenario>'}:{line}: " if line else ""
        super().__init__(f"{loc}{where + ': ' if where else ''}{msg}")


@dataclass(frozen=True)
class Scenario:
    id: str
    seed: int | None
    duration: float
    message_rate_hz: int
    control_rate_hz: int
    transport: str
    camera: FisheyeCameraModel
    landing: LandingParams
    noise: NoiseModel
    controller: ControllerConfig
    uav: UavDynamics
    home: tuple
    waypoints: tuple
    pedestrians: tuple
    distance_model: dict
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    def with_seed(self, seed: int) -> "Scenario":
        raw = copy.deepcopy(self.raw)
        raw["seed"] = seed
        return from_dict(raw)

    def with_overrides(self, **sections) -> "Scenario":
        raw = copy.deepcopy(self.raw)
        for k, v in sections.items():
            if isinstance(v, dict) and isinstance(raw.get(k), dict):
                raw[k].update(v)
            else:
                raw[k] = v
        return from_dict(raw)


def _merge(defaults, given, path):
    if not isinstance(given, dict):
        raise ScenarioError("expected a mapping", path)
    unknown = sorted(set(given) - set(defaults), key=str)
    if unknown:
        raise ScenarioError(f"unknown key (allowed: {', '.join(sorted(defaults))})", tuple(path) + (unknown[0],))
    out = copy.deepcopy(defaults)
    out.update(given)
    return out


def normalize(doc: dict) -> dict:
    """Fill defaults and reject unknown keys; returns a plain dict."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping")
    unknown = sorted(set(doc) - TOP_KEYS, key=str)
    if unknown:
        raise ScenarioError("unknown top-level key", (unknown[0],))
    if "id" not in doc:
        raise ScenarioError("missing required key 'id'")
    out = {"id": str(doc["id"]), "seed": doc.get("seed")}
    for k, v in DEFAULTS.items():
        if isinstance(v, dict) and k != "distance_model":
            out[k] = _merge(v, doc.get(k, {}), (k,))
        else:
            out[k] = copy.deepcopy(doc.get(k, v))
    return out


def _num(v, path, kind=float):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"expected a number, got {v!r}", path)
    if kind is int:
        if float(v) != int(v):
            raise ScenarioError(f"expected an integer, got {v!r}", path)
        return int(v)
    if not math.isfinite(v):
        raise ScenarioError("expected a finite number", path)
    return float(v)


def _build(section, path, fn):
    try:
        return fn()
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        raise ScenarioError(str(exc), path) from exc


def from_dict(doc: dict) -> Scenario:
    d = normalize(doc)
    seed = d["seed"]
    if seed is not None:
        seed = _num(seed, ("seed",), int)
    duration = _num(d["duration"], ("duration",))
    if duration <= 0:
        raise ScenarioError("duration must be > 0", ("duration",))
    msg_rate = _num(d["message_rate_hz"], ("message_rate_hz",), int)
    if not 0 < msg_rate <= RATE_CAP_HZ:
        raise ScenarioError(f"message rate must be in (0, {RATE_CAP_HZ:g}] Hz", ("message_rate_hz",))
    ctrl_rate = _num(d["control_rate_hz"], ("control_rate_hz",), int)
    if ctrl_rate <= 0:
        raise ScenarioError("control rate must be > 0", ("control_rate_hz",))
    if d["transport"] not in ("inprocess", "udp"):
        raise ScenarioError("transport must be 'inprocess' or 'udp'", ("transport",))

    c = d["camera"]
    pose = _build(c, ("camera",), lambda: CameraPose(
        _num(c["x"], ("camera", "x")),
        _num(c["y"], ("camera", "y")),
        wrap_angle(math.radians(_num(c["yaw_deg"], ("camera", "yaw_deg")))),
    ))
    cam = _build(c, ("camera",), lambda: FisheyeCameraModel(
        image_size=_num(c["image_size"], ("camera", "image_size"), int),
        fov=math.radians(_num(c["fov_deg"], ("camera", "fov_deg"))),
        mount_height=_num(c["mount_height"], ("camera", "mount_height")),
        pose=pose,
    ))
    lp = d["landing"]
    params = _build(lp, ("landing",), lambda: LandingParams(**{k: _num(v, ("landing", k)) for k, v in lp.items()}))
    nz = d["noise"]
    noise = _build(nz, ("noise",), lambda: NoiseModel(**{k: _num(v, ("noise", k)) for k, v in nz.items()}))
    u = d["uav"]
    dyn = _build(u, ("uav",), lambda: UavDynamics(**{k: _num(v, ("uav", k)) for k, v in u.items()}))

    cc = d["controller"]
    ints = {"danger_threshold", "clear_after"}
    kw = {}
    for k, v in cc.items():
        if k == "literal":
            if not isinstance(v, bool):
                raise ScenarioError("expected true/false", ("controller", k))
            kw[k] = v
        else:
            kw[k] = _num(v, ("controller", k), int if k in ints else float)
    ctrl = _build(cc, ("controller",), lambda: ControllerConfig(params=params, camera=pose, image=cam.dims, **kw))

    m = d["mission"]
    m = _merge(DEFAULTS["mission"], m, ("mission",))
    home = m["home"]
    if not (isinstance(home, list) and len(home) == 2):
        raise ScenarioError("home must be [x, y]", ("mission", "home"))
    home = tuple(_num(v, ("mission", "home", i)) for i, v in enumerate(home))
    wps = []
    for i, w in enumerate(m["waypoints"]):
        if not (isinstance(w, list) and len(w) == 3):
            raise ScenarioError("waypoint must be [x, y, z]", ("mission", "waypoints", i))
        wp = tuple(_num(v, ("mission", "waypoints", i, j)) for j, v in enumerate(w))
        if wp[2] <= 0:
            raise ScenarioError("waypoint altitude must be > 0", ("mission", "waypoints", i))
        wps.append(wp)

    peds = []
    seen = set()
    if not isinstance(d["pedestrians"], list):
        raise ScenarioError("expected a list", ("pedestrians",))
    for i, p in enumerate(d["pedestrians"]):
        path = ("pedestrians", i)
        p = _merge({"id": None, "height": 1.7, "radius": 0.05, "waypoints": []}, p, path)
        pid = str(p["id"]) if p["id"] is not None else f"p{i}"
        if pid in seen:
            raise ScenarioError(f"duplicate pedestrian id {pid}", path)
        seen.add(pid)
        if not isinstance(p["waypoints"], list) or not p["waypoints"]:
            raise ScenarioError("needs at least one [t, x, y] waypoint", path + ("waypoints",))
        twp = []
        for j, w in enumerate(p["waypoints"]):
            if not (isinstance(w, list) and len(w) == 3):
                raise ScenarioError("waypoint must be [t, x, y]", path + ("waypoints", j))
            twp.append(tuple(_num(v, path + ("waypoints", j, k)) for k, v in enumerate(w)))
        peds.append(_build(p, path, lambda: Pedestrian(
            pid, tuple(twp), _num(p["height"], path + ("height",)), _num(p["radius"], path + ("radius",))
        )))

    dm = d["distance_model"]
    if not isinstance(dm, dict) or dm.get("kind") not in ("gbdt", "oracle", "file"):
        raise ScenarioError("kind must be gbdt, oracle or file", ("distance_model", "kind"))
    if dm["kind"] == "gbdt":
        dm = _merge(DEFAULTS["distance_model"], dm, ("distance_model",))
        _num(dm["samples"], ("distance_model", "samples"), int)
        _num(dm["seed"], ("distance_model", "seed"), int)
    elif dm["kind"] == "file" and "path" not in dm:
        raise ScenarioError("file model needs a path", ("distance_model",))

    return Scenario(
        id=d["id"],
        seed=seed,
        duration=duration,
        message_rate_hz=msg_rate,
        control_rate_hz=ctrl_rate,
        transport=d["transport"],
        camera=cam,
        landing=params,
        noise=noise,
        controller=ctrl,
        uav=dyn,
        home=home,
        waypoints=tuple(wps),
        pedestrians=tuple(peds),
        distance_model=dict(dm),
        raw=d,
    )


def _line_of(text: str, path) -> int | None:
    """1-based source line of the YAML node at ``path``, best effort."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = node.start_mark.line + 1 if node is not None else None
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == str(key)), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
        line = node.start_mark.line + 1
    return line


def loads(text: str, source: str = "<scenario>") -> Scenario:
    try:
        doc = yaml.safe_load(text)  # JSON is a subset of YAML
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"parse error: {exc}", line=mark.line + 1 if mark else None, source=source) from exc
    try:
        return from_dict(doc)
    except ScenarioError as exc:
        raise ScenarioError(exc.msg, exc.path, _line_of(text, exc.path), source) from None


def load(path) -> Scenario:
    path = Path(path)
    return loads(path.read_text(), source=str(path))


def bundled_names() -> list[str]:
    root = resources.files("padguard") / "scenarios"
    return sorted(p.name.rsplit(".", 1)[0] for p in root.iterdir() if p.name.endswith((".yaml", ".json")))


def bundled(name: str) -> Scenario:
    root = resources.files("padguard") / "scenarios"
    for ext in (".yaml", ".json"):
        f = root / (name + ext)
        if f.is_file():
            return loads(f.read_text(), source=f"scenarios/{name}{ext}")
    raise KeyError(f"no bundled scenario {name!r}; have {bundled_names()}")


def resolve(name_or_path) -> Scenario:
    p = Path(name_or_path)
    if p.exists():
        return load(p)
    return bundled(str(name_or_path))


def to_json(s: Scenario) -> str:
    return json.dumps(s.raw, sort_keys=True, separators=(",", ":"))
