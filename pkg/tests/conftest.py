import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from stochprox.geometry import Euclidean, Hyperboloid, Point, Spider

settings.register_profile("default", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SPACES = [Euclidean(2), Hyperboloid(2), Spider(3)]

coord = st.floats(-5.0, 5.0, allow_nan=False, allow_infinity=False)


@st.composite
def points(draw, space):
    """Hypothesis strategy for points of ``space`` within a bounded region."""
    if isinstance(space, Euclidean):
        return Point(space, np.array([draw(coord) for _ in range(space.dim)]))
    if isinstance(space, Hyperboloid):
        v = np.array([draw(st.floats(-2.5, 2.5)) for _ in range(space.dim)])
        return Point(space, space.lift(v))
    leg = draw(st.integers(0, space.legs - 1))
    r = draw(st.one_of(st.just(0.0), st.floats(0.0, 5.0)))
    return Point(space, space.make(leg, r))


@pytest.fixture(params=SPACES, ids=lambda s: s.kind)
def space(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
