import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from statmatch import pivotal

N = 100_000


def test_certain():
    rng = np.random.default_rng(0)
    assert all(pivotal.sample([1.0], rng) == {0} for _ in range(100))


def test_single_marginal():
    sel = pivotal.sample_matrix([0.3], np.random.default_rng(1).random(N))
    assert abs(sel.mean() - 0.3) <= 4 * math.sqrt(0.21 / N)


def test_half_half_partition():
    # u < 0.5 selects index 0 only, u >= 0.5 index 1 only
    assert pivotal.sample_with([0.5, 0.5], 0.2) == [0]
    assert pivotal.sample_with([0.5, 0.5], 0.7) == [1]
    sel = pivotal.sample_matrix([0.5, 0.5], np.random.default_rng(2).random(N))
    assert (sel.sum(axis=1) == 1).all()


def test_prefix_hit_probability():
    assert pivotal.prefix_hit_probability([0.2, 0.3], 2) == pytest.approx(0.5)
    assert pivotal.prefix_hit_probability([0.8, 0.8], 2) == 1.0
    assert pivotal.prefix_hit_probability([0.25] * 4, 3) == pytest.approx(0.75)
    with pytest.raises(IndexError):
        pivotal.prefix_hit_probability([0.5], 2)
    with pytest.raises(IndexError):
        pivotal.prefix_hit_probability([0.5], 0)


def test_first_selected_examples():
    rng = np.random.default_rng(3)
    assert all(pivotal.first_selected([1.0, 0.7], rng) == 0 for _ in range(100))
    assert pivotal.first_selected([0.0, 0.0], rng) is None
    u = np.random.default_rng(4).random(N)
    first = np.array([pivotal.first_selected_with([0.6, 0.9], x) for x in u[:20000]])
    assert abs((first == 0).mean() - 0.6) <= 4 * math.sqrt(0.24 / 20000)
    assert abs((first == 1).mean() - 0.4) <= 4 * math.sqrt(0.24 / 20000)


def test_input_errors():
    with pytest.raises(ValueError):
        pivotal.sample([1.2], np.random.default_rng(0))
    with pytest.raises(ValueError):
        pivotal.sample([-0.1], np.random.default_rng(0))
    # tiny excursions are clipped
    assert pivotal.check_marginals([1 + 1e-13, -1e-13]) == [1.0, 0.0]


def test_determinism():
    m = [0.3, 0.5, 0.9, 0.2]
    a = [pivotal.sample(m, np.random.default_rng(9)) for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_compensated_prefix():
    m = [0.1] * 10
    assert pivotal.prefix_sums(m)[-1] == 1.0
    assert sum(m) != 1.0  # plain summation drifts


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.floats(0, 1, exclude_max=True))
def test_first_selected_is_min_of_sample(m, u):
    s = pivotal.sample_with(m, u)
    f = pivotal.first_selected_with(m, u)
    assert f == (min(s) if s else None)
    assert len(s) <= math.ceil(pivotal.prefix_sums(pivotal.check_marginals(m))[-1])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.floats(0, 1, exclude_max=True))
def test_matrix_agrees_with_scalar(m, u):
    row = pivotal.sample_matrix(m, [u])[0]
    assert np.flatnonzero(row).tolist() == pivotal.sample_with(m, u)


def test_marginal_and_prefix_statistics():
    rng = np.random.default_rng(5)
    for _ in range(10):
        k = int(rng.integers(1, 9))
        m = rng.random(k)
        sel = pivotal.sample_matrix(m, rng.random(N))
        band = 4 * np.sqrt(m * (1 - m) / N)
        assert (np.abs(sel.mean(axis=0) - m) <= band + 1e-12).all()
        pref = np.logical_or.accumulate(sel, axis=1).mean(axis=0)
        target = np.minimum(1, np.cumsum(m))
        assert (np.abs(pref - target) <= 4 * np.sqrt(target * (1 - target) / N) + 1e-12).all()
        assert sel.sum(axis=1).max() <= math.ceil(m.sum())
