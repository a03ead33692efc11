import numpy as np
import pytest

from core.beltrami_solver import Coefficient, solve
from core.coefficients import zero
from core.complex_field import GridSpec
from core.cz_transforms import make_plan


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run acceptance-scale tests on n = 256 and 512 grids")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def spec64():
    return GridSpec(0.5, 4.0, 64)


@pytest.fixture(scope="session")
def spec128():
    return GridSpec(0.5, 4.0, 128)


@pytest.fixture(scope="session")
def plan64(spec64):
    return make_plan(spec64)


@pytest.fixture(scope="session")
def plan128(spec128):
    return make_plan(spec128)


@pytest.fixture(scope="session")
def identity64(plan64):
    return solve(plan64, Coefficient(zero(plan64.spec)))


@pytest.fixture(scope="session")
def identity128(plan128):
    return solve(plan128, Coefficient(zero(plan128.spec)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
