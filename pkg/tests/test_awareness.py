import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import gammaincc, zeta as hurwitz

from rumorwave.awareness import (
    DistributionError,
    custom,
    dirac,
    make_distribution,
    poisson,
    riemann_zeta,
    uniform,
    zeta,
    zeta_tails,
)

finite_laws = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=12).filter(lambda v: sum(v) > 0.05).map(
    lambda v: custom(np.asarray(v) / math.fsum(v))
)
families = st.one_of(
    st.floats(0.05, 40.0).map(poisson),
    st.floats(1.01, 40.0).map(zeta),
    st.integers(1, 80).map(uniform),
    st.integers(1, 40).map(dirac),
    finite_laws,
)


@given(families)
def test_telescoping_hazard(dist):
    # T_{i+1} = T_i (1 - q_i) for i >= 2, T_2 = 1 - p_0 - p_1
    tab = dist.tables(120)
    T, q, p = tab.tail, tab.hazard, tab.pmf
    assert T[2] == pytest.approx(1 - p[0] - p[1], abs=1e-14)
    for i in range(2, 120):
        assert T[i + 1] == pytest.approx(T[i] * (1 - q[i]), abs=1e-14)


@given(families)
def test_tables_are_consistent(dist):
    tab = dist.tables(100)
    assert np.all(tab.pmf >= 0) and np.all(tab.tail >= 0)
    assert np.all(np.diff(tab.tail[1:]) <= 1e-16)
    assert np.all((tab.hazard >= 0) & (tab.hazard <= 1))
    assert tab.tail[1] + tab.pmf[0] == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(tab.tail[1:-1] - tab.tail[2:], tab.pmf[1:-1], atol=1e-15)


@given(st.floats(1.01, 60.0), st.integers(1, 400))
def test_zeta_tails_match_hurwitz(s, i):
    got = zeta_tails(s, i)[i]
    assert got == pytest.approx(hurwitz(s, i), rel=1e-12)


def test_riemann_zeta():
    assert riemann_zeta(2.0) == pytest.approx(math.pi ** 2 / 6, rel=1e-14)
    assert riemann_zeta(1.01) == pytest.approx(hurwitz(1.01, 1), rel=1e-12)


@given(st.floats(0.05, 60.0), st.integers(1, 150))
def test_poisson_tail_is_upper_gamma_complement(lam, i):
    # T_i = P(X >= i) = 1 - Q(i, lam) in scipy's notation
    ref = 1.0 - gammaincc(i, lam)
    assert poisson(lam).tail(i) == pytest.approx(ref, abs=1e-14)


def test_poisson_hazard_values():
    d = poisson(2.0)
    assert d.hazard(1) == pytest.approx(2 * math.exp(-2), abs=1e-16)
    assert d.tail(2) == pytest.approx(1 - 3 * math.exp(-2), abs=1e-16)
    assert d.hazard(2) == pytest.approx(2 * math.exp(-2) / (1 - 3 * math.exp(-2)), rel=1e-14)


def test_far_tail_keeps_relative_accuracy():
    d = zeta(30.0)
    # analytic tail, not 1 - partial sum
    assert d.tail(3) == pytest.approx(hurwitz(30.0, 3) / hurwitz(30.0, 1), rel=1e-12)
    assert 0 < d.hazard(5) <= 1


def test_finite_families():
    u = uniform(2)
    assert np.allclose(u.tables(3).pmf[:4], [1 / 3, 1 / 3, 1 / 3, 0])
    assert u.hazard(2) == 1.0 and u.hazard(3) == 0.0
    d = dirac(3)
    assert [d.hazard(i) for i in (1, 2, 3, 4)] == [0.0, 0.0, 1.0, 0.0]
    assert d.reach(1) == 1.0 and d.reach(3) == 1.0 and d.reach(4) == 0.0
    assert d.support == 3 and poisson(1.0).support is None


def test_effective_support_and_decay_certificate():
    d = poisson(2.0)
    m = d.effective_support(1e-14)
    assert d.tail(m) < 1e-14 <= d.tail(m - 1)
    assert d.pmf_sup_beyond(m) >= max(d.pmf(i) for i in range(m + 1, m + 50))
    z = zeta(1.5)
    assert z.pmf_sup_beyond(10) == pytest.approx(z.pmf(11))


def test_custom_validation():
    with pytest.raises(DistributionError):
        custom([0.5, 0.4])
    with pytest.raises(DistributionError):
        custom([1.2, -0.2])
    with pytest.raises(DistributionError):
        custom([])
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        d = custom([0.5, 0.5 + 5e-10])
    assert d.renormalized and w
    assert d.tables(2).pmf.sum() == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("bad", [("poisson", 0.0), ("zeta", 1.0), ("uniform", 0), ("dirac", 1.5), ("nope", 1)])
def test_constructor_errors(bad):
    with pytest.raises(DistributionError):
        make_distribution(*bad)


def test_make_distribution_aliases():
    assert make_distribution("mt").params == (1,)
    assert make_distribution("kmt", k=3).params == (3,)
    assert make_distribution("poisson", **{"lambda": 2}).params == (2,)
    with pytest.raises(DistributionError):
        make_distribution("poisson", mean=2)


def test_tables_read_only():
    tab = poisson(2.0).tables(10)
    with pytest.raises(ValueError):
        tab.pmf[0] = 1.0
