import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nhgikn.systems import CAT_MATRIX, M3_MATRIX, DAModel, LinearToral, SkewCircleExtension

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SKEW_COUPLING = [{"k": [1, 0], "cos": 0.02, "sin": 0.01}, {"k": [0, 1], "cos": 0.01}]


@pytest.fixture(scope="session")
def m3():
    return LinearToral(M3_MATRIX)


@pytest.fixture(scope="session")
def cat():
    return LinearToral(CAT_MATRIX)


@pytest.fixture(scope="session")
def skew():
    return SkewCircleExtension(CAT_MATRIX, 0.0, 0.05, SKEW_COUPLING)


@pytest.fixture(scope="session")
def rotation():
    return SkewCircleExtension(CAT_MATRIX, 0.5 * (np.sqrt(5) - 1), 0.0)


@pytest.fixture(scope="session")
def da():
    return DAModel(M3_MATRIX, radius=0.12, strength=0.9)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
