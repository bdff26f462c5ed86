import numpy as np
import pytest

from polylab.analysis import default_bound
from polylab.kernels import covariance_build, make_mollifier
from polylab.noise import VirtualNoiseField

# filled by test_acceptance; echoed once at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def spec():
    return make_mollifier(1.0, 3)


@pytest.fixture(scope="session")
def table(spec):
    return covariance_build(spec, 512)


@pytest.fixture(scope="session")
def bound():
    return default_bound(1.0, 3)


@pytest.fixture
def field():
    return VirtualNoiseField(11, dt=0.05, h=0.25, d=3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
