import numpy as np
import pytest

from snlab.params import SimParams


@pytest.fixture
def unit_params() -> SimParams:
    """m = a = hbar = G = 1 baseline used by most analytic checks."""
    return SimParams()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
