"""Localization scoring and run reports.

Everything here reads only a stored trace, so ``report`` on a saved trace
reproduces the report written at run time.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import asdict, dataclass

from .geometry import localize_box
from .scenario import from_dict

MATCH_WINDOW = 0.05


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class LocalizationEval:
    ape: float
    cossim: float
    matched: int
    omitted: int


def match_series(predicted, truth, window: float = MATCH_WINDOW):
    """Pair each predicted frame with the nearest-in-time truth sample.

    ``predicted`` is a list of ``(t, (x, y) or None)``; ``None`` marks a missed
    detection. ``truth`` is a time-sorted list of ``(t, (x, y))``. Frames with
    no detection or no truth within ``window`` seconds are omitted.
    """
    times = [t for t, _ in truth]
    pairs, omitted = [], 0
    for t, p in predicted:
        if p is None:
            omitted += 1
            continue
        i = bisect.bisect_left(times, t)
        best = None
        for j in (i - 1, i):
            if 0 <= j < len(times) and abs(times[j] - t) <= window + 1e-12:
                if best is None or abs(times[j] - t) < abs(times[best] - t):
                    best = j
        if best is None:
            omitted += 1
        else:
            pairs.append((p, truth[best][1]))
    return pairs, omitted


def _cos(a, b) -> float:
    na, nb = math.hypot(*a), math.hypot(*b)
    if na == 0.0 or nb == 0.0:
        return 1.0 if na == nb else 0.0
    return max(-1.0, min(1.0, (a[0] * b[0] + a[1] * b[1]) / (na * nb)))


def score_pairs(pairs, omitted: int, camera=(0.0, 0.0)) -> LocalizationEval:
    if not pairs:
        raise EvalError("no matched frames")
    cx, cy = camera
    err = [math.dist(p, q) for p, q in pairs]
    cos = [_cos((p[0] - cx, p[1] - cy), (q[0] - cx, q[1] - cy)) for p, q in pairs]
    return LocalizationEval(
        ape=sum(err) / len(err),
        cossim=sum(cos) / len(cos),
        matched=len(pairs),
        omitted=omitted,
    )


def eval_localization(predicted, truth, camera=(0.0, 0.0), window: float = MATCH_WINDOW) -> LocalizationEval:
    pairs, omitted = match_series(predicted, truth, window)
    return score_pairs(pairs, omitted, camera)


# -- trace-derived reporting --------------------------------------------------


def localization_from_trace(trace, window: float = MATCH_WINDOW) -> LocalizationEval | None:
    scn = from_dict(trace.header["scenario"])
    cam = scn.camera
    ids = [p.id for p in scn.pedestrians]
    if not ids:
        return None
    truth = {pid: [] for pid in ids}
    for r in trace.of_type("truth"):
        for pid, pos in r["peds"].items():
            truth[pid].append((r["t"], tuple(pos)))
    pred = {pid: [] for pid in ids}
    for r in trace.of_type("msg"):
        seen = {}
        for box, src in zip(r["msg"]["boxes"], r["src"]):
            if src is not None and src not in seen:
                p = localize_box(box["cx"], box["cy"], box["dist"], cam.dims, cam.pose)
                seen[src] = (p.x, p.y)
        for pid in ids:
            pred[pid].append((r["t"], seen.get(pid)))
    pairs, omitted = [], 0
    for pid in ids:
        p, o = match_series(pred[pid], truth[pid], window)
        pairs += p
        omitted += o
    if not pairs:
        return None
    return score_pairs(pairs, omitted, (cam.pose.d_x_cam, cam.pose.d_y_cam))


def retreat_events(transitions) -> int:
    n, hovering = 0, False
    for r in transitions:
        h = r["mode"] == "PRELANDING" and r["emergency"] and not r["emergency_landing"]
        if h and not hovering:
            n += 1
        hovering = h
    return n


def build_report(trace) -> dict:
    hdr = trace.header
    end = trace.summary
    td = trace.touchdown
    transitions = trace.transitions()
    min_dist = None
    if td is not None:
        truths = trace.of_type("truth")
        times = [r["t"] for r in truths]
        i = min(bisect.bisect_left(times, td["t"]), len(times) - 1)
        peds = truths[i]["peds"]
        if peds:
            min_dist = min(math.dist(td["pos"], p) for p in peds.values())
    loc = localization_from_trace(trace)
    sol = end["solution"]
    snapshot = end["people_snapshot"]
    min_snapshot = None
    if td is not None and snapshot:
        min_snapshot = min(math.dist(td["pos"], p) for p in snapshot)
    return {
        "scenario": hdr["scenario"]["id"],
        "seed": hdr["seed"],
        "touchdown": None if td is None else {"t": td["t"], "point": td["pos"]},
        "min_distance_to_pedestrian_m": min_dist,
        "min_distance_to_snapshot_m": min_snapshot,
        "retreat_events": retreat_events(transitions),
        "emergency_landing": end["emergency_landing"],
        "landing_offset": None if sol is None else sol["offset"],
        "landing_solution": sol,
        "people_snapshot": snapshot,
        "final_mode": end["final_mode"],
        "transitions": len(transitions),
        "localization": None if loc is None else asdict(loc),
        "channel": end["channel"],
        "sequence_gaps": end["gaps"],
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"
