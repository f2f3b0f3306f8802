import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import gammainc

from rumorwave.gammafn import (
    poisson_weight,
    poisson_weights,
    regularized_lower_gamma,
    regularized_lower_gamma_upto,
    tail_terms,
)

shapes = st.integers(1, 500)
args = st.floats(0.0, 400.0, allow_nan=False)


@given(shapes, args)
def test_recurrence(n, t):
    lhs = regularized_lower_gamma(n + 1, t)
    rhs = regularized_lower_gamma(n, t) - poisson_weight(n, t)
    assert abs(lhs - rhs) <= 1e-14


@given(shapes, args)
def test_matches_scipy(n, t):
    assert regularized_lower_gamma(n, t) == pytest.approx(gammainc(n, t), abs=1e-14)


@given(st.integers(1, 200), st.floats(0.5, 300.0))
def test_derivative_is_poisson_weight(n, t):
    h = 1e-5 * max(1.0, t)
    fd = (regularized_lower_gamma(n, t + h) - regularized_lower_gamma(n, t - h)) / (2 * h)
    assert fd == pytest.approx(poisson_weight(n - 1, t), abs=1e-6)


@given(st.integers(1, 300), args)
def test_vector_route_agrees(nmax, t):
    v = regularized_lower_gamma_upto(nmax, t)
    assert len(v) == nmax
    for n in {1, nmax, (nmax + 1) // 2}:
        assert v[n - 1] == pytest.approx(regularized_lower_gamma(n, t), abs=1e-14)


@given(shapes, args)
def test_bounds_and_monotone(n, t):
    a, b = regularized_lower_gamma(n, t), regularized_lower_gamma(n + 1, t)
    assert 0.0 <= b <= a <= 1.0


def test_known_values():
    assert regularized_lower_gamma(1, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-16)
    assert regularized_lower_gamma(2, 2.0) == pytest.approx(1 - 3 * math.exp(-2), abs=1e-16)
    assert regularized_lower_gamma(3, 0.0) == 0.0
    assert poisson_weight(0, 0.0) == 1.0
    assert poisson_weight(4, 0.0) == 0.0


@pytest.mark.parametrize("t", [0.0, 0.3, 5.0, 120.0, 400.0])
def test_weights_sum_to_one(t):
    w = poisson_weights(tail_terms(t), t)
    assert w.sum() == pytest.approx(1.0, abs=1e-13)
    assert w[-1] < 1e-17 or t == 0.0


@pytest.mark.parametrize("n,t", [(0, 1.0), (1.5, 1.0), (2, -0.1), (2, float("nan")), (True, 1.0)])
def test_domain_errors(n, t):
    with pytest.raises(ValueError):
        regularized_lower_gamma(n, t)
