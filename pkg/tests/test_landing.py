import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_problem
from padguard import landing as L
from padguard.geometry import WorldPoint2D

P0 = L.LandingParams(1.0, 3.0, 0.5, 0.0)


def prob(people, camera=(0, 0), **kw):
    params = L.LandingParams(**{**dict(r_l=1.0, r_s=3.0, r_d=0.5, alpha=0.0), **kw})
    return L.LandingProblem([WorldPoint2D(*p) for p in people], WorldPoint2D(*camera), params)


def constraint_violation(sol, problem):
    o = np.array([sol.offset.x, sol.offset.y])
    rel = problem.relative_people()
    v = [math.hypot(*o) - problem.params.r_l]
    v += [problem.params.r_d - math.dist(o, p) for p in rel]
    return max(0.0, max(v))


def test_objective_examples():
    assert L.objective(WorldPoint2D(-1, 0), prob([(1, 0)])) == pytest.approx(2.0)
    two = prob([(1.5, 0), (-1.5, 0)])
    assert L.objective(WorldPoint2D(0, 1), two) == pytest.approx(2 * math.sqrt(3.25))
    with pytest.raises(L.InvalidProblem):
        L.objective(WorldPoint2D(0, 0), prob([]))


def test_alpha_zero_weights_are_one():
    assert np.all(prob([(0.1, 0), (2.9, 0), (0, 0)]).weights() == 1.0)


def test_weights_clamped_near_camera():
    w = prob([(0, 0), (2, 0)], alpha=2).weights()
    assert w[0] == pytest.approx(1 / 0.05**2) and w[1] == pytest.approx(0.25)


def test_solve_one_person():
    s = L.solve(prob([(1, 0)]))
    assert s.feasible and not s.fallback_used
    assert s.offset.x == pytest.approx(-1, abs=1e-6) and s.offset.y == pytest.approx(0, abs=1e-6)


def test_solve_no_people():
    s = L.solve(prob([]))
    assert (s.offset.x, s.offset.y) == (0.0, 0.0) and s.feasible


def test_solve_two_people_tie_breaks_to_positive_y():
    s = L.solve(prob([(1.5, 0), (-1.5, 0)]))
    assert s.offset.x == pytest.approx(0, abs=1e-6) and s.offset.y == pytest.approx(1, abs=1e-6)
    assert s.objective == pytest.approx(2 * math.sqrt(3.25))


@pytest.mark.parametrize("people", [[(1, 0)], [], [(1.5, 0), (-1.5, 0)]])
def test_oracle_agrees_on_examples(people):
    p = prob(people)
    s, o = L.solve(p), L.oracle_solve(p, 0.01)
    assert math.dist((s.offset.x, s.offset.y), (o.offset.x, o.offset.y)) <= 0.01
    assert s.objective == pytest.approx(o.objective, rel=1e-3, abs=1e-12)


def test_landing_point_is_camera_plus_offset():
    p = prob([(3.5, 1)], camera=(2, 1))
    s = L.solve(p)
    lp = s.landing_point(p)
    assert (lp.x, lp.y) == pytest.approx((2 + s.offset.x, 1 + s.offset.y))


def test_oracle_agreement_random():
    rng = np.random.default_rng(11)
    for _ in range(25):
        p = random_problem(rng)
        s, o = L.solve(p), L.oracle_solve(p, 0.01)
        assert s.feasible == o.feasible
        assert s.objective >= o.objective - 1e-3 * o.objective
        if s.feasible:
            assert constraint_violation(s, p) <= 1e-6


def sample_feasible(rng, p, n=1000):
    r = p.params.r_l * np.sqrt(rng.random(n))
    a = rng.uniform(0, 2 * np.pi, n)
    pts = np.column_stack([r * np.cos(a), r * np.sin(a)])
    rel = p.relative_people()
    d = np.hypot(pts[:, None, 0] - rel[:, 0], pts[:, None, 1] - rel[:, 1]).min(axis=1)
    return pts[d >= p.params.r_d]


@pytest.mark.parametrize("seed", range(6))
def test_monte_carlo_dominance(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng)
    pts = sample_feasible(rng, p)
    if len(pts) == 0:
        pytest.skip("no feasible sample drawn")
    w = p.weights()
    best_sample = float(L._objective_rel(pts, p.relative_people(), w).max())
    assert L.solve(p).objective >= best_sample - 1e-9
    # the grid oracle is exact only up to its resolution: objective Lipschitz
    # constant sum(w) times the half-diagonal of a grid cell
    step = 0.01
    assert L.oracle_solve(p, step).objective >= best_sample - w.sum() * step * math.sqrt(0.5)


@pytest.mark.parametrize("seed", range(4))
def test_oracle_refinement_monotone(seed):
    p = random_problem(np.random.default_rng(100 + seed))
    coarse, fine = L.oracle_solve(p, 0.02), L.oracle_solve(p, 0.01)
    assert fine.objective >= coarse.objective - 1e-6


@settings(max_examples=40)
@given(st.integers(0, 10**6), st.floats(-50, 50), st.floats(-50, 50))
def test_translation_equivariance(seed, tx, ty):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, n_max=3)
    moved = L.LandingProblem(
        [WorldPoint2D(q.x + tx, q.y + ty) for q in p.people],
        WorldPoint2D(p.camera.x + tx, p.camera.y + ty),
        p.params,
    )
    a, b = L.solve(p), L.solve(moved)
    la, lb = a.landing_point(p), b.landing_point(moved)
    assert math.dist((la.x + tx, la.y + ty), (lb.x, lb.y)) <= 1e-6
    assert a.objective == pytest.approx(b.objective, rel=1e-9, abs=1e-9)


@settings(max_examples=40)
@given(st.integers(0, 10**6), st.floats(0, 2 * math.pi))
def test_rotation_equivariance_of_objective(seed, th):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, n_max=3)
    c, s = math.cos(th), math.sin(th)
    rot = L.LandingProblem([WorldPoint2D(c * q.x - s * q.y, s * q.x + c * q.y) for q in p.people], p.camera, p.params)
    a, b = L.solve(p), L.solve(rot)
    assert a.feasible == b.feasible
    assert a.objective == pytest.approx(b.objective, rel=1e-6)


@settings(max_examples=40)
@given(st.integers(0, 10**6))
def test_constraints_hold_or_fallback_flagged(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng, n_max=6)
    s = L.solve(p)
    if s.feasible:
        assert not s.fallback_used
        assert constraint_violation(s, p) <= 1e-6
    else:
        assert s.fallback_used and not L.is_feasible(p)


def test_infeasible_uses_max_clearance_fallback():
    p = prob([(0, 0)], r_d=1.5)
    assert not L.is_feasible(p)
    s = L.solve(p)
    assert s.fallback_used and not s.feasible
    assert math.hypot(s.offset.x, s.offset.y) == pytest.approx(1.0, abs=0.02)


def test_exact_feasibility_matches_dense_grid():
    rng = np.random.default_rng(5)
    for _ in range(40):
        p = random_problem(rng, r_s=1.5)
        p = L.LandingProblem(p.people, p.camera, L.LandingParams(1.0, 1.5, 0.9, 0.0))
        grid = L.disc_grid(1.0, 0.01)
        rel = p.relative_people()
        d = np.hypot(grid[:, None, 0] - rel[:, 0], grid[:, None, 1] - rel[:, 1]).min(axis=1)
        if (d >= 0.9).any():
            assert L.is_feasible(p)


def test_feasible_set_may_be_only_a_vertex_region():
    # three people hem in the disc; the solution sits where danger circles meet
    p = prob([(0.55, 0.0), (-0.3, 0.5), (-0.3, -0.5)], r_d=0.6)
    s, o = L.solve(p), L.oracle_solve(p, 0.01)
    assert s.feasible == o.feasible
    if s.feasible:
        assert constraint_violation(s, p) <= 1e-6
        assert s.objective >= o.objective * (1 - 1e-3)


def test_polar_key():
    assert L.polar_key((0, 1)) == pytest.approx((math.pi / 2, 1))
    assert L.polar_key((1, -1e-12))[0] == 0.0
    assert L.polar_key((0, 0)) == (0.0, 0.0)


def test_validation():
    with pytest.raises(L.InvalidProblem):
        prob([(3.5, 0)])
    with pytest.raises(L.InvalidProblem):
        L.LandingParams(r_l=4, r_s=3)
    with pytest.raises(L.InvalidProblem):
        L.LandingParams(alpha=-1)
    with pytest.raises(L.InvalidProblem):
        L.problem_from_dict({"people": []})


def test_json_round_trip():
    p = prob([(1, 0.5), (-2, 1)], camera=(0.5, 0.5), alpha=1.5)
    back = L.problem_from_dict(L.problem_to_dict(p))
    assert back == p
    d = L.solution_to_dict(L.solve(p), p)
    assert set(d) == {"offset", "objective", "feasible", "fallback_used", "landing_point"}
