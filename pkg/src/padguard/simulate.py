"""Lockstep closed-loop simulation: world, detector, channel, controller, UAV.

All components run on one integer tick clock at ``base_hz`` (a common
multiple of the message and control rates, at least 60 Hz), so cadence is
exact and no wall-clock time leaks into the trace.
"""

from __future__ import annotations

import functools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import distance, messaging
from .mission import Controller, FlightMode, initial_state, setpoint_repr
from .scenario import Scenario
from .world import UavState, step_uav, synth_detections, synthetic_dataset

logger = logging.getLogger(__name__)

TRACE_PROTO = "padguard-trace/1"
MIN_BASE_HZ = 60
UDP_POLL_TIMEOUT = 1.0


@functools.lru_cache(maxsize=8)
def _trained_model(samples: int, seed: int, camera, pixel_sigma: float) -> distance.GbdtModel:
    X, y = synthetic_dataset(samples, seed=seed, cam=camera, pixel_sigma=pixel_sigma)
    return distance.fit(X, y, distance.TUNED_DEFAULTS, seed=seed)


def distance_function(scn: Scenario):
    """Distance source for synthetic detections: ``f(features, truth) -> metres``."""
    dm = scn.distance_model
    if dm["kind"] == "oracle":
        return lambda f, truth: truth if truth is not None else 0.0
    if dm["kind"] == "file":
        model = distance.load_model(dm["path"])
    else:
        model = _trained_model(int(dm["samples"]), int(dm["seed"]), scn.camera, scn.noise.pixel_sigma)
    return lambda f, truth: model.predict_one(f)


def base_rate(msg_hz: int, ctrl_hz: int) -> int:
    base = math.lcm(msg_hz, ctrl_hz)
    return base * math.ceil(MIN_BASE_HZ / base)


def _r(v: float) -> float:
    # trims float noise from repeated dt accumulation so traces stay readable
    return round(float(v), 9)


@dataclass
class SimulationTrace:
    records: list = field(default_factory=list)

    def of_type(self, kind: str) -> list:
        return [r for r in self.records if r["type"] == kind]

    @property
    def header(self) -> dict:
        return self.records[0]

    @property
    def touchdown(self) -> dict | None:
        t = self.of_type("touchdown")
        return t[0] if t else None

    @property
    def summary(self) -> dict:
        return self.of_type("end")[0]

    def transitions(self) -> list:
        return [{k: v for k, v in r.items() if k != "type"} for r in self.of_type("transition")]

    def dumps(self) -> str:
        return "".join(json.dumps(r, separators=(",", ":"), allow_nan=False) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def read(cls, path) -> "SimulationTrace":
        recs = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
        if not recs or recs[0].get("proto") != TRACE_PROTO:
            raise ValueError(f"{path} is not a {TRACE_PROTO} trace")
        return cls(recs)


def _transport(scn: Scenario):
    if scn.transport == "udp":
        sub = messaging.UdpSubscription("127.0.0.1", 0)
        sender = messaging.UdpSender("127.0.0.1", sub.port, seed=scn.seed)
        return sender, sub, lambda: (sender.close(), sub.close())
    chan = messaging.InProcessChannel()
    sub = chan.subscribe()
    return chan, sub, chan.close


def run_scenario(scn: Scenario, seed: int | None = None) -> SimulationTrace:
    seed = scn.seed if seed is None else seed
    if seed is None:
        raise ValueError(f"scenario {scn.id} has no seed")
    if seed != scn.seed:
        scn = scn.with_seed(seed)
    base = base_rate(scn.message_rate_hz, scn.control_rate_hz)
    msg_every = base // scn.message_rate_hz
    ctrl_every = base // scn.control_rate_hz
    dt = 1.0 / base
    n_ticks = int(round(scn.duration * base))
    dist_fn = distance_function(scn)

    transport, sub, close = _transport(scn)
    pub = messaging.Publisher(transport, messaging.RATE_CAP_HZ)
    ctrl = Controller(scn.controller, initial_state(scn.controller, scn.home, scn.waypoints))
    uav = UavState(position=(scn.home[0], scn.home[1], 0.0))

    trace = SimulationTrace()
    rec = trace.records.append
    rec({"type": "header", "proto": TRACE_PROTO, "scenario": scn.raw, "seed": seed, "base_hz": base})
    seq = 0
    setpoint = None
    touchdown = None
    logged = 0
    try:
        for n in range(n_ticks + 1):
            t = n / base
            if n % msg_every == 0:
                rng = np.random.default_rng([seed, seq])
                msg, src = synth_detections(scn.camera, scn.pedestrians, scn.noise, t, seq, rng, dist_fn)
                delta = pub.publish(msg)
                doc = json.loads(messaging.encode(msg))
                rec({"type": "msg", "t": _r(t), "published": bool(delta.published), "msg": doc, "src": src})
                seq += 1
            rec({"type": "truth", "t": _r(t), "peds": {p.id: list(p.position(t)) for p in scn.pedestrians}})
            if n % ctrl_every == 0:
                if pub.last_seq is not None:
                    incoming = sub.poll(until_seq=pub.last_seq, timeout=UDP_POLL_TIMEOUT)
                else:
                    incoming = sub.poll()
                setpoint = ctrl.step(t, uav.position, incoming)
                for entry in ctrl.log[logged:]:
                    rec({"type": "transition", **entry})
                logged = len(ctrl.log)
                rec({
                    "type": "tick",
                    "t": _r(t),
                    "mode": ctrl.state.mode.value,
                    "uav": [_r(c) for c in uav.position],
                    "setpoint": setpoint_repr(setpoint),
                })
            if n == n_ticks:
                break
            uav = step_uav(uav, setpoint, dt, scn.uav)
            if touchdown is None and ctrl.state.mode is FlightMode.LANDING and uav.position[2] <= 0.0:
                touchdown = {"type": "touchdown", "t": _r(t + dt), "pos": [_r(uav.position[0]), _r(uav.position[1])]}
                rec(touchdown)
    finally:
        close()

    s = ctrl.state
    rec({
        "type": "end",
        "t": _r(n_ticks / base),
        "final_mode": s.mode.value,
        "uav": [_r(c) for c in uav.position],
        "emergency_landing": s.emergency_landing,
        "shifts": s.shifts,
        "prelanding_pos": list(s.prelanding_pos),
        "people_snapshot": [list(p) for p in s.people_snapshot],
        "solution": None if s.solution is None else {
            "offset": [s.solution.offset.x, s.solution.offset.y],
            "objective": s.solution.objective,
            "feasible": s.solution.feasible,
            "fallback_used": s.solution.fallback_used,
        },
        "dropped_messages": s.dropped_messages,
        "channel": {"published": pub.stats.published, "dropped": pub.stats.dropped, "rate_hz": pub.stats.rate_hz},
        "gaps": sub.gaps,
    })
    return trace
