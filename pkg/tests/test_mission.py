import math
import threading

import pytest
from hypothesis import given, settings, strategies as st

from padguard import landing, mission as MS
from padguard.messaging import Box, BoundingBoxesDist
from padguard.mission import LAND, ControllerConfig, FlightMode, Setpoint

CFG = ControllerConfig(danger_threshold=5, clear_after=3, prelanding_dwell=1.0)


def box_at(dist, cy=0.3):
    # cx = 0.5, cy < 0.5 lies on the +x camera axis
    return Box(0.5, cy, 0.05, 0.1, 0.9, dist)


def message(seq, *dists):
    return BoundingBoxesDist(seq, seq / 30, tuple(box_at(d) for d in dists))


def prelanding(cfg=CFG):
    s = MS.initial_state(cfg)
    return s.__class__(**{**s.__dict__, "mode": FlightMode.PRELANDING})


def test_in_zone_box_raises_emergency():
    s = MS.on_bbox_message(prelanding(), message(0, 2.9), CFG)
    assert s.emergency and s.danger_counter == 1


def test_out_of_zone_boxes_leave_state():
    s0 = prelanding()
    s = MS.on_bbox_message(s0, message(0, 3.1, 4.0), CFG)
    assert (s.emergency, s.danger_counter, s.prelanding_pos) == (False, 0, s0.prelanding_pos)


def test_messages_outside_prelanding_ignored():
    s0 = MS.initial_state(CFG)
    s = MS.on_bbox_message(s0, message(0, 1.0), CFG)
    assert not s.emergency and s.ignored_messages == 1


def test_malformed_message_dropped():
    bad = BoundingBoxesDist(0, 0.0, (Box(0.5, 0.5, 0.1, 0.1, 0.9, -2.0),))
    s = MS.on_bbox_message(prelanding(), bad, CFG)
    assert s.dropped_messages == 1 and not s.emergency


def test_threshold_triggers_single_shift(monkeypatch):
    calls = []
    real = landing.solve

    def spy(problem, *a, **k):
        calls.append(problem)
        return real(problem, *a, **k)

    monkeypatch.setattr(landing, "solve", spy)
    s = prelanding()
    for i in range(4):
        s = MS.on_bbox_message(s, message(i, 2.0), CFG)
    assert not s.emergency_landing and not calls
    s = MS.on_bbox_message(s, message(4, 2.0, 1.5), CFG)
    assert len(calls) == 1 and len(calls[0].people) == 2
    assert s.emergency_landing and s.shifts == 1
    off = s.solution.offset
    pad = prelanding().prelanding_pos
    assert s.prelanding_pos == pytest.approx((pad[0] + off.x, pad[1] + off.y, pad[2]))
    s2 = MS.on_bbox_message(s, message(5, 2.0), CFG)
    assert len(calls) == 1 and s2.prelanding_pos == s.prelanding_pos and s2.shifts == 1


def test_shifted_point_satisfies_constraints_for_snapshot():
    s = prelanding()
    for i in range(5):
        s = MS.on_bbox_message(s, message(i, 1.2, 0.8), CFG)
    assert s.emergency_landing
    x, y, _ = s.prelanding_pos
    for px, py in s.people_snapshot:
        assert math.dist((x, y), (px, py)) >= CFG.params.r_d - 1e-6
    assert math.hypot(x, y) <= CFG.params.r_l + 1e-6


def test_tick_examples():
    s = prelanding()
    assert MS.tick(s) == Setpoint(*s.prelanding_pos)
    em = MS.on_bbox_message(s, message(0, 2.0), CFG)
    assert MS.tick(em) == Setpoint(*s.retreat_pos)
    assert s.retreat_pos[2] == s.prelanding_pos[2] + CFG.retreat_climb
    assert MS.tick(em.__class__(**{**em.__dict__, "mode": FlightMode.LANDING})) is LAND


def test_takeoff_to_mission_to_prelanding():
    wps = [(1.0, 0.0, 2.0)]
    s = MS.initial_state(CFG, waypoints=wps)
    s = MS.mode_advance(s, (0, 0, 1.0), 0.0, CFG)
    assert s.mode is FlightMode.TAKEOFF
    s = MS.mode_advance(s, (0, 0, 1.95), 0.0, CFG)
    assert s.mode is FlightMode.MISSION
    assert MS.tick(s) == Setpoint(*wps[0])
    s = MS.mode_advance(s, (0.9, 0.0, 2.0), 1.0, CFG)
    assert s.mode is FlightMode.PRELANDING


def test_prelanding_dwell_then_landing():
    s = prelanding()
    at = s.prelanding_pos
    s = MS.mode_advance(s, at, 10.0, CFG)
    assert s.mode is FlightMode.PRELANDING
    s = MS.mode_advance(s, at, 10.5, CFG)
    assert s.mode is FlightMode.PRELANDING
    s = MS.mode_advance(s, at, 11.0, CFG)
    assert s.mode is FlightMode.LANDING


def test_hover_lock_blocks_landing():
    s = MS.on_bbox_message(prelanding(), message(0, 2.0), CFG)
    for t in range(100):
        s = MS.mode_advance(s, s.prelanding_pos, float(t), CFG)
        assert s.mode is FlightMode.PRELANDING


def test_emergency_landing_lands_at_shifted_point():
    s = prelanding()
    for i in range(5):
        s = MS.on_bbox_message(s, message(i, 2.0), CFG)
    assert MS.mode_advance(s, (0, 0, 3.0), 0.0, CFG).mode is FlightMode.PRELANDING
    assert MS.mode_advance(s, s.prelanding_pos, 0.0, CFG).mode is FlightMode.LANDING


def test_emergency_clears_after_clear_streak():
    s = MS.on_bbox_message(prelanding(), message(0, 2.0), CFG)
    for i in range(1, 3):
        s = MS.on_bbox_message(s, message(i), CFG)
        assert s.emergency
    s = MS.on_bbox_message(s, message(3), CFG)
    assert not s.emergency and s.danger_counter == 0


def test_literal_mode_never_clears():
    cfg = ControllerConfig(danger_threshold=1000, literal=True)
    s = MS.on_bbox_message(prelanding(cfg), message(0, 2.0), cfg)
    for i in range(1, 200):
        s = MS.on_bbox_message(s, message(i), cfg)
    assert s.emergency and s.danger_counter == 1


def test_force_emergency():
    c = MS.Controller(CFG, prelanding())
    c.request_emergency()
    c.step(0.0, (0, 0, 3), [message(0)])
    assert c.state.emergency_landing and c.state.shifts == 1
    assert c.state.people_snapshot == ()


def test_controller_submit_from_threads():
    c = MS.Controller(ControllerConfig(danger_threshold=1000), prelanding())
    threads = [threading.Thread(target=lambda k=k: [c.submit(message(k * 100 + i, 2.0)) for i in range(50)]) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    c.step(0.0, (0, 0, 3))
    assert c.state.danger_counter == 200


def test_setpoint_rejects_negative_altitude():
    with pytest.raises(ValueError):
        Setpoint(0, 0, -0.1)


events = st.lists(
    st.one_of(
        st.tuples(st.just("msg"), st.lists(st.floats(0.1, 5), max_size=3)),
        st.tuples(st.just("move"), st.sampled_from(["pre", "away", "retreat"])),
    ),
    max_size=80,
)


@settings(max_examples=150)
@given(events, st.booleans())
def test_safety_latch_and_single_shift(evts, literal):
    cfg = ControllerConfig(danger_threshold=4, clear_after=3, literal=literal, prelanding_dwell=0.0)
    c = MS.Controller(cfg, prelanding(cfg))
    pos = (5.0, 5.0, 3.0)
    seq, last_counter = 0, 0
    for i, (kind, arg) in enumerate(evts):
        msgs = []
        if kind == "msg":
            msgs = [BoundingBoxesDist(seq, seq / 30, tuple(box_at(d) for d in arg))]
            seq += 1
        else:
            pos = {"pre": c.state.prelanding_pos, "away": (5.0, 5.0, 3.0), "retreat": c.state.retreat_pos}[arg]
        sp = c.step(i * 0.05, pos, msgs)
        s = c.state
        assert not (s.mode is FlightMode.LANDING and s.emergency and not s.emergency_landing)
        assert s.shifts <= 1
        assert (sp is LAND) == (s.mode is FlightMode.LANDING)
        if literal:
            assert s.danger_counter >= last_counter
        last_counter = s.danger_counter
