import os

import pytest
from hypothesis import HealthCheck, settings

from fcap.bodies import Box, Wulff
from fcap.norms import DualNorm, NormSpec
from fcap.pde.solver import solve_annulus, solve_exterior

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# coarse grid shared by the unit tests; the acceptance suite builds its own
SMALL = 32


@pytest.fixture(scope="session")
def euclid():
    H = NormSpec.euclidean(3)
    return H, DualNorm.of(H)


@pytest.fixture(scope="session")
def small_wulff(euclid):
    H, D = euclid
    return solve_exterior(H, D, Wulff(D, 1.0), 2.0, resolution=SMALL)


@pytest.fixture(scope="session")
def small_cube(euclid):
    H, D = euclid
    # the cube needs a few more cells than the ball to resolve its faces
    return solve_exterior(H, D, Box([1.0, 1.0, 1.0]), 2.0, resolution=40)


@pytest.fixture(scope="session")
def small_annulus(euclid):
    H, D = euclid
    return solve_annulus(H, D, Wulff(D, 0.5), 2.0, 2.0, resolution=SMALL)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import LINES
    except ImportError:
        return
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
