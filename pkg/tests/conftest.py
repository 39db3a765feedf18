import os

import numpy as np
import pytest

from app.core.model import make_example_1, make_random_system, to_modal


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale runs, enabled with DAMPOPT_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("DAMPOPT_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set DAMPOPT_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_modal(rng):
    return make_random_system(12, rng, alpha=0.05, m=1, p=2)


@pytest.fixture(scope="module")
def chain20():
    return to_modal(make_example_1(20))


@pytest.fixture(scope="module")
def chain12():
    return to_modal(make_example_1(12))
