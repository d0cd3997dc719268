import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


def within_3se(value, target, se, floor=1e-12):
    return abs(value - target) <= 3.0 * max(se, floor)
