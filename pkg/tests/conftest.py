import numpy as np
import pytest

from statmatch.instance import make_instance


@pytest.fixture
def one_by_one():
    return make_instance([1.0], [1.0], [1.0], {(0, 0): 1.0})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
