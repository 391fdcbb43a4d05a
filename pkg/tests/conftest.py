import numpy as np
import pytest

from scarlet_kit.data.dataset import generate_synthetic, split
from scarlet_kit.engine.tensor import Rng
from scarlet_kit.search_space.spec import load_space


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale experiment tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="desk-scale experiment; pass --runslow to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def t1():
    return load_space("t1")


@pytest.fixture
def t1_els(t1):
    return t1.with_stabilizers()


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture(scope="session")
def tiny_splits():
    """256 train / 32 val / 64 test samples of the default 4-class task."""
    return split(generate_synthetic(seed=0, n=352, classes=4, size=16), 1 / 9, seed=0)


@pytest.fixture
def probe_batch(rng):
    return rng.uniform(0.0, 1.0, size=(4, 3, 16, 16)).astype(np.float32)
