import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import enumerate_sisyphus_survival
from sisyphus_walk.analytics import design_log_trajectory, gamma_sisyphus
from sisyphus_walk.core import (
    ConstantVelocityTrap,
    DomainError,
    LogarithmicTrap,
    OccupancyState,
    StaticTrap,
    TableTrap,
    TrajectoryRangeError,
)
from sisyphus_walk.exact import (
    PropagationConfig,
    decay_rate_static,
    first_reachable_tick,
    propagate_step,
    survival_exact,
    survival_recurrence,
)


def exact(q, traj, t_max, **kw):
    return survival_exact(PropagationConfig(q, traj, t_max, checkpoints="all", **kw))


def test_step_examples():
    state = OccupancyState(1, np.array([0.5, 0.5]), 0.0)
    nxt, d = propagate_step(state, 0.5, StaticTrap(2))
    assert list(nxt.mass) == [0.5, 0.25] and d == 0.25 and nxt.survival == 0.75

    state = OccupancyState(3, np.array([0.375, 0.25]), 0.375)
    nxt, d = propagate_step(state, 0.5, StaticTrap(2))
    assert d == 0.125 and nxt.survival == 0.5


def test_step_trap_recedes_no_absorption():
    traj = TableTrap((3, 3, 3, 3, 4))
    state = OccupancyState(3, np.array([0.2, 0.3, 0.5]), 0.0)
    nxt, d = propagate_step(state, 0.6, traj)
    assert d == 0.0
    assert nxt.mass[3] == pytest.approx(0.6 * 0.5)
    assert nxt.survival == pytest.approx(1.0)


def test_step_beyond_table_errors():
    state = OccupancyState(2, np.array([1.0, 0.0]), 0.0)
    with pytest.raises(TrajectoryRangeError):
        propagate_step(state, 0.5, TableTrap((2, 2, 2)))


def test_survival_examples():
    assert list(exact(0.5, StaticTrap(2), 4).s) == [1, 1, 0.75, 0.625, 0.5]
    assert list(exact(0.5, StaticTrap(1), 3).s) == [1, 0.5, 0.25, 0.125]


def test_unreachable_prefix_is_one():
    d = design_log_trajectory(0.9, 0.05)
    traj = d.trajectory()
    t_star = first_reachable_tick(traj.positions(2000))
    assert t_star is not None and t_star > 10
    s = exact(0.9, traj, t_star - 1).s
    assert np.all(s == 1.0)
    assert exact(0.9, traj, t_star).s[-1] < 1.0


TRAJS = [
    StaticTrap(1),
    StaticTrap(3),
    ConstantVelocityTrap(1, __import__("fractions").Fraction(1, 3)),
    LogarithmicTrap(1 / math.log(2), 1.0, "floor"),
    LogarithmicTrap(2.0, -0.5, "ceil"),
    TableTrap((1, 2, 2, 3, 3, 3, 4, 5, 5, 5, 6, 6, 6)),
]


@pytest.mark.parametrize("traj", TRAJS, ids=lambda t: t.label)
@pytest.mark.parametrize("q", [0.3, 0.5, 0.8])
def test_propagation_matches_path_enumeration(traj, q):
    t_max = 12
    oracle = enumerate_sisyphus_survival(q, traj.positions(t_max), t_max)
    np.testing.assert_allclose(exact(q, traj, t_max).s, oracle, rtol=1e-13, atol=0)


@given(st.floats(0.05, 0.95), st.integers(1, 6), st.integers(0, 4))
@settings(max_examples=60, deadline=None)
def test_mass_conservation_and_monotonicity(q, x0, extra):
    traj = ConstantVelocityTrap(x0, __import__("fractions").Fraction(extra, 5))
    series = exact(q, traj, 3000)
    assert series.meta["conservation_error"] < 1e-12
    assert np.all(np.diff(series.s) <= 0)
    assert np.all(series.s >= 0)


def test_long_run_conservation():
    traj = design_log_trajectory(0.5, 0.25).trajectory()
    series = survival_exact(PropagationConfig(0.5, traj, 10**6))
    assert series.meta["conservation_error"] < 1e-12
    assert len(series.t) < 1000


def test_underflow_stop():
    series = survival_exact(PropagationConfig(0.5, StaticTrap(1), 5000))
    assert series.meta["underflow"]
    assert series.meta["stop_tick"] < 1100
    assert series.s[-1] < 1e-300 or series.s[-1] == series.s.min()


def test_recurrence_examples():
    s = survival_recurrence(PropagationConfig(0.5, StaticTrap(2), 4, checkpoints="all")).s
    assert s[3] == 0.625
    s = survival_recurrence(PropagationConfig(0.5, StaticTrap(1), 3, checkpoints="all")).s
    assert s[2] == 0.25 and s[3] == 0.125


@pytest.mark.parametrize("q", [0.2, 0.5, 0.9])
@pytest.mark.parametrize("x0", [1, 4, 7])
def test_recurrence_matches_propagation_long(q, x0):
    cfg = PropagationConfig(q, StaticTrap(x0), 10**5)
    rec = survival_recurrence(cfg)
    ex = survival_exact(cfg)
    n = min(len(rec.s), len(ex.s))
    np.testing.assert_allclose(rec.s[:n], ex.s[:n], rtol=1e-12, atol=0)


def test_recurrence_float_route_instability_is_real():
    # the spurious root lambda=q dominates in floating point when q > x/(x+1)
    cfg = PropagationConfig(0.9, StaticTrap(2), 3000, checkpoints="all")
    mp = survival_recurrence(cfg, arithmetic="mp").s
    fl = survival_recurrence(cfg, arithmetic="float").s
    ex = exact(0.9, StaticTrap(2), 3000).s
    n = min(len(mp), len(ex))
    np.testing.assert_allclose(mp[:n], ex[:n], rtol=1e-12)
    # the float route drifts and then crosses zero long before the true underflow
    m = min(len(fl), n)
    assert m < n or np.max(np.abs(fl[:m] / ex[:m] - 1)) > 1e-12


def test_recurrence_moving_trap_is_an_approximation():
    traj = design_log_trajectory(0.5, 0.25).trajectory()
    cfg = PropagationConfig(0.5, traj, 2000, checkpoints="all")
    rec = survival_recurrence(cfg).s
    ex = survival_exact(cfg).s
    # the recurrence ignores that frontier mass escapes when the trap advances
    assert np.max(np.abs(rec - ex)) > 1e-3
    assert np.all(rec <= ex + 1e-15)


def test_decay_rate_examples():
    assert decay_rate_static(0.5, 1) == pytest.approx(math.log(2), rel=1e-12)
    assert decay_rate_static(0.9, 1) == pytest.approx(math.log(10), rel=1e-12)
    g = decay_rate_static(0.5, 10)
    assert g == pytest.approx(4.90804e-4, rel=1e-5)
    assert gamma_sisyphus(0.5, 10) == pytest.approx(4.8840e-4, rel=1e-4)


@pytest.mark.parametrize("q", [0.1, 0.3, 0.5, 0.7, 0.9])
@pytest.mark.parametrize("x0", [1, 2, 3, 5, 8])
def test_decay_rate_is_root_of_characteristic_polynomial(q, x0):
    lam = math.exp(-decay_rate_static(q, x0))
    assert lam**(x0 + 1) - lam**x0 + q**x0 * (1 - q) == pytest.approx(0.0, abs=1e-14)
    assert 0 < lam < 1
    if not math.isclose(q, x0 / (x0 + 1)):
        assert abs(lam - q) > 1e-6


@pytest.mark.parametrize("q", [0.2, 0.5, 0.8])
@pytest.mark.parametrize("x0", [1, 3, 6])
def test_measured_rate_matches_root(q, x0):
    gamma = decay_rate_static(q, x0)
    t_max = int(min(10 * x0 / gamma + 200, 2e5))
    series = exact(q, StaticTrap(x0), t_max)
    s = series.s
    t = series.t
    k = np.searchsorted(t, int(10 * x0 / gamma))
    k = min(k, len(s) - 2)
    rate = -math.log(s[k + 1] / s[k])
    assert rate == pytest.approx(gamma, rel=1e-9, abs=1e-10)


def test_asymptotic_error_monotone_on_grid():
    for q in np.round(np.arange(0.1, 0.91, 0.1), 1):
        errs = [abs(decay_rate_static(q, x) - gamma_sisyphus(q, x)) / gamma_sisyphus(q, x)
                for x in range(1, 13)]
        assert all(b < a for a, b in zip(errs, errs[1:])), q


def test_config_validation():
    with pytest.raises(DomainError):
        PropagationConfig(1.0, StaticTrap(1), 10)
    with pytest.raises(DomainError):
        PropagationConfig(0.5, StaticTrap(1), 0)
