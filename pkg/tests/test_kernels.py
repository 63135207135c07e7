import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arraymcts.errors import ContractViolation
from arraymcts.kernels import (
    SATURATED_VALUE,
    UctParams,
    any_unvisited,
    incremental_mean,
    max_index,
    random_untried,
    select,
    select_arith,
    select_mask,
    uct_value,
)


def all_int8_cases():
    a, b = np.meshgrid(np.arange(-128, 128, dtype=np.int8), np.arange(-128, 128, dtype=np.int8))
    a, b = a.ravel(), b.ravel()
    return a, b


@pytest.mark.parametrize("cond", [False, True])
def test_selects_agree_with_conditional_exhaustively(cond):
    a, b = all_int8_cases()
    c = np.full(a.shape, cond)
    expected = np.where(c, a, b)
    assert np.array_equal(select_arith(a, b, c), expected)
    assert np.array_equal(select_mask(a, b, c), expected)


def test_select_scalar_examples():
    assert select_arith(5, -3, True) == 5
    assert select_arith(5, -3, False) == -3
    assert select_mask(127, -128, False) == -128
    assert select_mask(-1, 0, True) == -1
    assert select(2.5, 7.0, 1) == 2.5


def test_uct_frozen_value():
    # 0.5 + 2 * sqrt(ln 3 / 4)
    assert uct_value(0.5, 4, 3, 2.0) == pytest.approx(1.5481470739682, rel=1e-12)


def test_uct_unvisited_saturates():
    assert uct_value(-1e6, 0, 10, 1.0) == SATURATED_VALUE
    assert math.isfinite(SATURATED_VALUE)
    # headroom: adding a value on top of the saturated score stays finite
    assert math.isfinite(SATURATED_VALUE + 1e300)


def test_uct_contract():
    with pytest.raises(ContractViolation):
        uct_value(0.0, 1, 0, 1.0)
    with pytest.raises(ContractViolation):
        UctParams(-0.1)
    assert uct_value(1.0, 2, 5, UctParams(0.0)) == 1.0


@given(v=st.floats(-100, 100), n=st.integers(1, 1000), p=st.integers(1, 10**6),
       c=st.floats(0, 10))
def test_uct_monotone_in_value_and_visits(v, n, p, c):
    base = uct_value(v, n, p, c)
    assert uct_value(v + 1.0, n, p, c) > base
    assert uct_value(v, n + 1, p, c) <= base


def test_max_index_ties_lowest():
    assert max_index([1.0, 3.0, 3.0, 2.0]) == 1
    assert max_index([0.0]) == 0
    assert max_index([-np.inf, -1.0]) == 1
    with pytest.raises(ContractViolation):
        max_index([])


@given(st.lists(st.integers(-5, 5), min_size=1, max_size=12))
def test_max_index_matches_numpy(xs):
    assert max_index(np.array(xs, dtype=float)) == int(np.argmax(xs))


def test_any_unvisited():
    assert any_unvisited([3, 0, 1])
    assert not any_unvisited([1, 1])
    with pytest.raises(ContractViolation):
        any_unvisited([])


@pytest.mark.parametrize("visits, draw, expected", [
    ([0, 0, 0], 0.34, 1),
    ([0, 0, 0], 0.0, 0),
    ([0, 0, 0], 0.99, 2),
    ([2, 0, 5, 0], 0.6, 3),
    ([1, 1], 0.5, 0),  # nothing untried: fixed fallback
])
def test_random_untried_examples(visits, draw, expected):
    assert random_untried(np.array(visits), draw) == expected


def test_random_untried_rejects_bad_draw():
    with pytest.raises(ContractViolation):
        random_untried([0], 1.0)
    with pytest.raises(ContractViolation):
        random_untried([], 0.5)


def test_random_untried_uniform():
    rng = np.random.default_rng(7)
    visits = np.array([4, 0, 0, 9, 0])
    picks = np.array([random_untried(visits, d) for d in rng.random(30000)])
    assert set(picks.tolist()) == {1, 2, 4}
    for i in (1, 2, 4):
        assert abs(np.mean(picks == i) - 1 / 3) < 0.02


def test_incremental_mean_is_order_free():
    samples = [0.3, -1.25, 4.0, 2.5, 0.0]
    for order in permutations(samples):
        m = 0.0
        for k, x in enumerate(order, 1):
            m = incremental_mean(m, x, k)
        assert m == pytest.approx(np.mean(samples), rel=1e-12)
    with pytest.raises(ContractViolation):
        incremental_mean(0.0, 1.0, 0)


@settings(max_examples=50)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40))
def test_incremental_mean_matches_batch(xs):
    m = 0.0
    for k, x in enumerate(xs, 1):
        m = incremental_mean(m, x, k)
    assert m == pytest.approx(float(np.mean(xs)), rel=1e-9, abs=1e-9)
