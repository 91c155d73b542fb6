import numpy as np
import pytest

from surropt.traffic import GridSpec, build_scenario

DESK_SPEC = GridSpec(rows=3, cols=3, phases=4, vehicles=100, horizon_s=500, seed=1)
TINY_SPEC = GridSpec(rows=2, cols=2, phases=2, vehicles=20, horizon_s=120, seed=3)


@pytest.fixture(scope="session")
def desk_scenario():
    return build_scenario(DESK_SPEC)


@pytest.fixture(scope="session")
def tiny_scenario():
    return build_scenario(TINY_SPEC)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
