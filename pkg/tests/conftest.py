import functools

import pytest
from hypothesis import settings

from padguard import scenario, simulate

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def bundled_trace(name: str, seed: int | None = None) -> simulate.SimulationTrace:
    return simulate.run_scenario(scenario.bundled(name), seed=seed)


@pytest.fixture(scope="session")
def trace_of():
    return bundled_trace


@pytest.fixture(scope="session")
def synthetic_split():
    """5000 noisy synthetic samples split 4000 train / 1000 holdout."""
    import numpy as np

    from padguard.world import synthetic_dataset

    X, y = synthetic_dataset(5000, seed=0)
    perm = np.random.default_rng(0).permutation(len(y))
    te, tr = perm[:1000], perm[1000:]
    return X[tr], y[tr], X[te], y[te]


@pytest.fixture(scope="session")
def tuned_model(synthetic_split):
    from padguard import distance

    X, y, _, _ = synthetic_split
    return distance.fit(X, y, distance.TUNED_DEFAULTS, seed=0)


def random_problem(rng, n_max=6, alpha=None, r_s=3.0, camera=(0.0, 0.0)):
    """People uniform in the scan disc, r_l=1, r_d=0.5."""
    from padguard.geometry import WorldPoint2D
    from padguard.landing import LandingParams, LandingProblem

    import numpy as np

    n = int(rng.integers(1, n_max + 1))
    r = r_s * np.sqrt(rng.random(n))
    a = rng.uniform(0, 2 * np.pi, n)
    people = [WorldPoint2D(camera[0] + x, camera[1] + y) for x, y in zip(r * np.cos(a), r * np.sin(a))]
    if alpha is None:
        alpha = float(rng.choice([0.0, 1.0, 1.5, 2.0]))
    return LandingProblem(people, WorldPoint2D(*camera), LandingParams(1.0, r_s, 0.5, alpha))


ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """``record(tag, ok, detail)`` logs one acceptance line, then asserts ``ok``."""

    def _record(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
