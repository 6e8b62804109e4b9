"""Emergency landing-spot selection around the hover point.

The landing point is chosen as an offset from the camera/hover position that
maximizes the weighted sum of distances to the people in the scan zone,

    sum_i  ||X_c + offset - X_i|| / max(||X_i - X_c||, eps_c) ** alpha

subject to staying ``r_d`` away from every person and within ``r_l`` of the
hover point. Everything is solved in the hover-relative frame.

``solve`` runs a multi-start SQP; ``oracle_solve`` is an independent grid
search used to check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import sqp
from .geometry import WorldPoint2D

EPS_C = 0.05
TWO_PI = 2.0 * math.pi


class InvalidProblem(ValueError):
    pass


@dataclass(frozen=True)
class LandingParams:
    r_l: float = 1.0
    r_s: float = 3.0
    r_d: float = 0.5
    alpha: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.r_l <= self.r_s:
            raise InvalidProblem(f"need 0 < r_l <= r_s, got r_l={self.r_l}, r_s={self.r_s}")
        if self.r_d < 0:
            raise InvalidProblem(f"r_d must be >= 0, got {self.r_d}")
        if self.alpha < 0:
            raise InvalidProblem(f"alpha must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class LandingProblem:
    people: tuple
    camera: WorldPoint2D
    params: LandingParams

    def __post_init__(self):
        object.__setattr__(self, "people", tuple(self.people))
        for p in self.people:
            if (p - self.camera).norm() > self.params.r_s * (1 + 1e-9) + 1e-12:
                raise InvalidProblem(f"person at ({p.x}, {p.y}) lies outside the scan zone")

    def relative_people(self) -> np.ndarray:
        c = self.camera
        return np.array([[p.x - c.x, p.y - c.y] for p in self.people]).reshape(-1, 2)

    def weights(self, eps_c: float = EPS_C) -> np.ndarray:
        rel = self.relative_people()
        d = np.maximum(np.hypot(rel[:, 0], rel[:, 1]), eps_c)
        return d ** (-self.params.alpha)


@dataclass(frozen=True)
class LandingSolution:
    offset: WorldPoint2D
    objective: float
    feasible: bool
    fallback_used: bool

    def landing_point(self, problem: LandingProblem) -> WorldPoint2D:
        return problem.camera + self.offset


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    n_ring: int = 15
    max_iter: int = 100
    tie_rtol: float = 1e-9
    fallback_grid: float = 0.02
    eps_c: float = EPS_C
    vertex_starts: bool = True


def _objective_rel(o: np.ndarray, rel: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Objective at relative offsets ``o`` of shape (..., 2)."""
    diff = o[..., None, :] - rel
    return (np.hypot(diff[..., 0], diff[..., 1]) * w).sum(axis=-1)


def objective(offset: WorldPoint2D, problem: LandingProblem, eps_c: float = EPS_C) -> float:
    if not problem.people:
        raise InvalidProblem("objective needs at least one person")
    o = np.array([offset.x, offset.y])
    return float(_objective_rel(o, problem.relative_people(), problem.weights(eps_c)))


def polar_key(o) -> tuple[float, float]:
    """Tie-break key: polar angle in [0, 2pi) first, then radius."""
    x, y = float(o[0]), float(o[1])
    r = math.hypot(x, y)
    if r == 0.0:
        return 0.0, 0.0
    a = math.atan2(y, x) % TWO_PI
    if a > TWO_PI - 1e-9:
        a = 0.0
    return a, r


def _pick(points: np.ndarray, values: np.ndarray, tie_rtol: float) -> int:
    best = float(values.max())
    tie = np.flatnonzero(values >= best - tie_rtol * max(1.0, abs(best)))
    return int(min(tie, key=lambda i: polar_key(points[i])))


def _violation(o: np.ndarray, rel: np.ndarray, params: LandingParams) -> float:
    v = math.hypot(o[0], o[1]) - params.r_l
    if len(rel):
        v = max(v, float(params.r_d - np.hypot(*(o - rel).T).min()))
    return max(v, 0.0)


def _blocked_arcs(rel, r_l, r_d):
    """Angular intervals of the search circle that fall inside a danger disc."""
    arcs = []
    for px, py in rel:
        rho = math.hypot(px, py)
        if rho + r_l <= r_d:
            return [(0.0, TWO_PI)]
        if rho == 0.0 or abs(rho - r_l) >= r_d:
            continue
        # law of cosines: angle between person direction and circle point at distance r_d
        cos_half = (rho * rho + r_l * r_l - r_d * r_d) / (2.0 * rho * r_l)
        half = math.acos(max(-1.0, min(1.0, cos_half)))
        centre = math.atan2(py, px) % TWO_PI
        lo, hi = centre - half, centre + half
        if lo < 0:
            arcs += [(lo + TWO_PI, TWO_PI), (0.0, hi)]
        elif hi > TWO_PI:
            arcs += [(lo, TWO_PI), (0.0, hi - TWO_PI)]
        else:
            arcs.append((lo, hi))
    return arcs


def free_arcs(rel: np.ndarray, params: LandingParams) -> list[tuple[float, float]]:
    """Closed angular intervals of the search circle outside every danger disc."""
    blocked = sorted(_blocked_arcs(rel, params.r_l, params.r_d))
    free, cursor = [], 0.0
    for lo, hi in blocked:
        if lo > cursor:
            free.append((cursor, lo))
        cursor = max(cursor, hi)
    if cursor < TWO_PI:
        free.append((cursor, TWO_PI))
    if len(free) > 1 and free[0][0] == 0.0 and free[-1][1] == TWO_PI:
        lo, _ = free.pop()
        free[0] = (lo - TWO_PI, free[0][1])
    return free


def danger_vertices(rel: np.ndarray, params: LandingParams) -> list[np.ndarray]:
    """Pairwise danger-circle intersections lying in the feasible set."""
    out = []
    r = params.r_d
    if r == 0.0:
        return out
    for i in range(len(rel)):
        for j in range(i + 1, len(rel)):
            a, b = rel[i], rel[j]
            d = math.hypot(*(b - a))
            if d == 0.0 or d > 2 * r:
                continue
            mid = (a + b) / 2.0
            h = math.sqrt(max(r * r - d * d / 4.0, 0.0))
            perp = np.array([a[1] - b[1], b[0] - a[0]]) / d
            for q in (mid + h * perp, mid - h * perp):
                if _violation(q, rel, params) <= 1e-9:
                    out.append(q)
    return out


def is_feasible(problem: LandingProblem) -> bool:
    """Exact non-emptiness test for the constraint set.

    A nonempty feasible set always contains a point on the search circle or a
    corner where two danger circles cross, so checking those suffices.
    """
    rel = problem.relative_people()
    if len(rel) == 0 or problem.params.r_d == 0.0:
        return True
    return bool(free_arcs(rel, problem.params)) or bool(danger_vertices(rel, problem.params))


def _push_out(s: np.ndarray, rel: np.ndarray, r_d: float) -> np.ndarray:
    s = s.copy()
    for _ in range(3):
        moved = False
        for p in rel:
            v = s - p
            dist = math.hypot(*v)
            if dist < r_d:
                if dist > 0:
                    u = v / dist
                elif math.hypot(*p) > 0:
                    u = -p / math.hypot(*p)
                else:
                    u = np.array([1.0, 0.0])
                s = p + u * r_d * (1 + 1e-9)
                moved = True
        if not moved:
            break
    return s


def _starts(rel: np.ndarray, params: LandingParams, cfg: SolverConfig) -> list[np.ndarray]:
    pts = [np.zeros(2)]
    for k in range(cfg.n_ring):
        a = TWO_PI * k / cfg.n_ring
        pts.append(params.r_l * np.array([math.cos(a), math.sin(a)]))
    if cfg.vertex_starts:
        for lo, hi in free_arcs(rel, params):
            a = 0.5 * (lo + hi)
            pts.append(params.r_l * np.array([math.cos(a), math.sin(a)]))
        pts.extend(danger_vertices(rel, params))
    return [_push_out(s, rel, params.r_d) for s in pts]


def _repair(o: np.ndarray, rel: np.ndarray, params: LandingParams) -> np.ndarray:
    """Snap solver round-off back onto the active constraints."""
    n = math.hypot(*o)
    if n > params.r_l:
        o = o * (params.r_l / n)
    for p in rel:
        v = o - p
        dist = math.hypot(*v)
        if 0 < dist < params.r_d:
            o = p + v * (params.r_d / dist)
    return o


def fallback_solution(problem: LandingProblem, grid_step: float) -> LandingSolution:
    """Safest point when no constraint-satisfying spot exists: maximize the
    clearance to the nearest person over the search disc."""
    rel = problem.relative_people()
    grid = disc_grid(problem.params.r_l, grid_step)
    diff = grid[:, None, :] - rel
    clearance = np.hypot(diff[..., 0], diff[..., 1]).min(axis=1)
    i = _pick(grid, clearance, 1e-12)
    o = grid[i]
    obj = float(_objective_rel(o, rel, problem.weights()))
    return LandingSolution(WorldPoint2D(float(o[0]), float(o[1])), obj, False, True)


def solve(problem: LandingProblem, tol: float | None = None, config: SolverConfig = SolverConfig()) -> LandingSolution:
    tol = config.tol if tol is None else tol
    rel = problem.relative_people()
    params = problem.params
    if len(rel) == 0:
        return LandingSolution(WorldPoint2D(0.0, 0.0), 0.0, True, False)
    if not is_feasible(problem):
        return fallback_solution(problem, config.fallback_grid)
    w = problem.weights(config.eps_c)

    def f(o):
        return -float(_objective_rel(o, rel, w))

    def grad(o):
        diff = o - rel
        dist = np.maximum(np.hypot(diff[:, 0], diff[:, 1]), 1e-12)
        return -(w[:, None] * diff / dist[:, None]).sum(axis=0)

    def cons(o):
        diff = o - rel
        return np.concatenate([[params.r_l**2 - o @ o], (diff**2).sum(axis=1) - params.r_d**2])

    def cons_jac(o):
        return np.vstack([-2.0 * o, 2.0 * (o - rel)])

    found_x, found_f = [], []
    for s in _starts(rel, params, config):
        res = sqp.minimize(f, grad, cons, cons_jac, s, max_iter=config.max_iter)
        o = _repair(res.x, rel, params)
        if _violation(o, rel, params) <= tol:
            found_x.append(o)
            found_f.append(-f(o))
    if not found_x:
        return fallback_solution(problem, config.fallback_grid)
    pts = np.array(found_x)
    i = _pick(pts, np.array(found_f), config.tie_rtol)
    o = pts[i]
    return LandingSolution(WorldPoint2D(float(o[0]), float(o[1])), float(found_f[i]), True, False)


def disc_grid(radius: float, step: float) -> np.ndarray:
    if step <= 0:
        raise InvalidProblem("grid_step must be > 0")
    n = int(math.floor(radius / step))
    ij = np.arange(-n, n + 1)
    gx, gy = np.meshgrid(ij * step, ij * step, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return pts[np.hypot(pts[:, 0], pts[:, 1]) <= radius * (1 + 1e-12)]


def oracle_solve(problem: LandingProblem, grid_step: float = 0.01, fallback_grid: float = 0.02) -> LandingSolution:
    """Exhaustive grid search over the search disc, honoring both constraints."""
    rel = problem.relative_people()
    grid = disc_grid(problem.params.r_l, grid_step)
    if len(rel) == 0:
        return LandingSolution(WorldPoint2D(0.0, 0.0), 0.0, True, False)
    diff = grid[:, None, :] - rel
    ok = np.hypot(diff[..., 0], diff[..., 1]).min(axis=1) >= problem.params.r_d
    if not ok.any():
        return fallback_solution(problem, fallback_grid)
    pts = grid[ok]
    vals = _objective_rel(pts, rel, problem.weights())
    i = _pick(pts, vals, 1e-12)
    return LandingSolution(WorldPoint2D(float(pts[i, 0]), float(pts[i, 1])), float(vals[i]), True, False)


# -- JSON helpers -----------------------------------------------------------


def problem_from_dict(d: dict) -> LandingProblem:
    try:
        params = LandingParams(**d["params"])
        cam = WorldPoint2D(*map(float, d["camera"]))
        people = [WorldPoint2D(*map(float, p)) for p in d.get("people", [])]
    except (KeyError, TypeError) as exc:
        raise InvalidProblem(f"malformed landing problem: {exc}") from exc
    return LandingProblem(people, cam, params)


def problem_to_dict(p: LandingProblem) -> dict:
    return {
        "people": [[q.x, q.y] for q in p.people],
        "camera": [p.camera.x, p.camera.y],
        "params": {"r_l": p.params.r_l, "r_s": p.params.r_s, "r_d": p.params.r_d, "alpha": p.params.alpha},
    }


def solution_to_dict(s: LandingSolution, problem: LandingProblem | None = None) -> dict:
    out = {
        "offset": [s.offset.x, s.offset.y],
        "objective": s.objective,
        "feasible": s.feasible,
        "fallback_used": s.fallback_used,
    }
    if problem is not None:
        lp = s.landing_point(problem)
        out["landing_point"] = [lp.x, lp.y]
    return out
