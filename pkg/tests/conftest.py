import numpy as np
import pytest

from stochvort.field import Grid


@pytest.fixture(scope="session")
def grid():
    return Grid(32)


@pytest.fixture(scope="session")
def mesh(grid):
    return grid.mesh


def pytest_addoption(parser):
    parser.addoption(
        "--skip-slow", action="store_true", default=False, help="skip the slowest tests"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--skip-slow"):
        marker = pytest.mark.skip(reason="--skip-slow")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(marker)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running test")
    np.seterr(all="raise", under="ignore")
