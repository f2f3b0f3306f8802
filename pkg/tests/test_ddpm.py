import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rumorwave.awareness import dirac, poisson
from rumorwave.ddpm import (
    DomainError,
    JumpPath,
    LimitTrajectory,
    Rate,
    Transition,
    TransitionSpec,
    UniformStream,
    drift,
    integrate_limit,
    make_rng,
    simulate,
    sup_distance,
)
from rumorwave.mtra import classical_transitions, mtra_transitions


def test_rate_forms():
    x = np.array([0.2, 0.5, 0.1])
    assert Rate(2.0, (0, 1))(x) == pytest.approx(0.2)
    assert Rate(1.0, (), complement=1.0, complement_start=1)(x) == pytest.approx(0.4)
    assert Rate(0.5, (1, 1), shift=0.1)(x) == pytest.approx(0.5 * 0.5 * 0.4)
    assert Rate(1.0, (7,))(x) == 0.0


def test_transition_rejects_empty_and_oversized():
    with pytest.raises(ValueError):
        Transition(((0, 0),), Rate(1.0))
    with pytest.raises(ValueError):
        TransitionSpec(fixed=(Transition(((0, -2), (1, 1)), Rate(1.0)),), increment_bound=2)


def test_dk_drift_matches_density_system():
    # ignorant, spreader, stifler: x' = -xy, y' = xy - y^2 - yz, z' = y^2 + yz
    spec = classical_transitions("dk")
    x, y, z = 0.6, 0.3, 0.1
    f = drift(spec, [x, y, z])
    assert np.allclose(f, [-x * y, x * y - y * y - y * z, y * y + y * z], atol=1e-15)


def test_accelerated_mt_drift():
    # accelerated MT: x' = -x, y' = 2x - 1 on sum(x) + y <= 1
    spec = mtra_transitions(dirac(1))
    f = drift(spec, [0.25, 0.5])
    assert np.allclose(f[:2], [2 * 0.5 - 1, -0.5], atol=1e-15)


@given(st.floats(0.0, 0.5), st.lists(st.floats(0.0, 0.1), min_size=1, max_size=6))
def test_mtra_drift_conserves_mass_flux(y, xs):
    # every transition moves at most one individual out of (y, x); the total
    # change is -(p0 x1 + stifling rate)
    d = poisson(1.5)
    spec = mtra_transitions(d)
    x = np.array([y] + xs)
    f = drift(spec, x)
    p0 = d.pmf(0)
    assert f.sum() == pytest.approx(-(p0 * xs[0] + (1 - sum(xs))), abs=1e-12)


def test_drift_domain():
    spec = mtra_transitions(dirac(1))
    with pytest.raises(DomainError):
        drift(spec, [1.5, 0.6])
    assert drift(spec, [1.5, 0.6], strict=False).shape[0] >= 2


def test_rng_streams():
    a = make_rng(7, 1, 2).random(5)
    b = make_rng(7, 1, 2).random(5)
    c = make_rng(7, 1, 3).random(5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    s = UniformStream(make_rng(3), block=4)
    got = [s.next() for _ in range(10)]
    assert np.array_equal(got, make_rng(3).random(10))


def test_simulate_is_reproducible_and_conserves():
    spec = mtra_transitions(poisson(2.0), "original", 200)
    a = simulate(spec, 200, [1, 199], seed=5)
    b = simulate(spec, 200, [1, 199], seed=5)
    assert np.array_equal(a.times, b.times) and a.increment_sequence() == b.increment_sequence()
    states = a.states()
    assert np.all(states >= 0)
    assert np.all(states.sum(axis=1) <= 200)
    assert a.reason == "absorbed" and states[-1, 0] == 0
    assert np.all(np.diff(a.times) > 0)


def test_simulate_horizon_and_cap():
    spec = mtra_transitions(dirac(1), "original", 500)
    p = simulate(spec, 500, [1, 499], horizon=1e-3, seed=1)
    assert p.reason == "horizon" and p.end_time == 1e-3
    q = simulate(spec, 500, [1, 499], seed=1, event_cap=10)
    assert q.reason == "event-cap" and len(q) == 10


def test_accelerated_chain_absorbs_at_zero_spreaders():
    spec = mtra_transitions(dirac(1), "accelerated", 50)
    path = simulate(spec, 50, [1, 49], seed=2, absorbing=0)
    assert path.reason == "absorbed" and path.final_state()[0] == 0


def test_simulate_rejects_bad_initial():
    spec = mtra_transitions(dirac(1), "original", 10)
    with pytest.raises(ValueError):
        simulate(spec, 10, [-1, 5])


def test_integrator_against_exact_mt():
    spec = mtra_transitions(dirac(1))
    traj = integrate_limit(spec, [0.0, 1.0], 1.5, step=1e-3)
    t = traj.times
    assert np.allclose(traj.states[:, 1], np.exp(-t), atol=1e-12)
    assert np.allclose(traj.states[:, 0], 2 * (1 - np.exp(-t)) - t, atol=1e-12)
    assert traj.nonnegative()


def test_integrator_grows_truncation():
    d = poisson(3.0)
    traj = integrate_limit(mtra_transitions(d), [0.0, 1.0], 1.0, step=1e-2)
    assert traj.width > 20
    assert traj.remainder[-1] < 1e-9


def test_integrator_rejects_mass_beyond_support():
    with pytest.raises(DomainError):
        integrate_limit(mtra_transitions(dirac(1)), [0.0, 0.5, 0.5], 1.0)


def _brute_sup(path: JumpPath, traj: LimitTrajectory, upto: float) -> float:
    # dense evaluation on a fine grid plus both sides of every jump
    pts = np.concatenate([np.linspace(0, upto, 20001), path.times[path.times <= upto]])
    states = path.states()
    best = 0.0
    for s in pts:
        for side in ("left", "right"):
            k = np.searchsorted(path.times, s, side=side)
            x = states[k] / path.n
            ref = traj.at(s, len(x))[0]
            best = max(best, float(np.abs(x - ref).sum()))
    return best


def test_sup_distance_matches_brute_force():
    spec = mtra_transitions(dirac(1), "accelerated", 60)
    path = simulate(spec, 60, [1, 59], seed=11, absorbing=0)
    traj = integrate_limit(mtra_transitions(dirac(1)), [1 / 60, 59 / 60], 2.0, step=1e-2)
    upto = 1.2
    assert sup_distance(path, traj, upto) == pytest.approx(_brute_sup(path, traj, upto), abs=1e-4)
    assert sup_distance(path, traj, upto) >= _brute_sup(path, traj, upto) - 1e-12
