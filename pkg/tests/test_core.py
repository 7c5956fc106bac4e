import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sisyphus_walk.analytics import design_log_trajectory, predicted_beta
from sisyphus_walk.core import (
    ConstantVelocityTrap,
    DomainError,
    FitResult,
    LogarithmicTrap,
    OccupancyState,
    PowerLawDesign,
    StaticTrap,
    SurvivalSeries,
    TableTrap,
    TrajectoryRangeError,
    check_q,
    checkpoint_grid,
    trajectory_position,
    validate_trajectory,
)

LN2 = math.log(2)


def test_static_position():
    assert trajectory_position(StaticTrap(5), 1000) == 5


def test_log_floor_examples():
    traj = LogarithmicTrap(1 / LN2, 1.0, "floor")
    assert trajectory_position(traj, 1) == 1
    assert trajectory_position(traj, 16) == 5
    # a*ln 8 evaluates to 2.9999999999999996 in floating point; must snap to 3
    assert trajectory_position(traj, 8) == 4


def test_constant_velocity_example():
    assert trajectory_position(ConstantVelocityTrap(2, Fraction(1, 2)), 5) == 4


def test_tick_zero_reuses_tick_one():
    traj = LogarithmicTrap(3.0, 0.2, "floor")
    assert trajectory_position(traj, 0) == trajectory_position(traj, 1) == 1


def test_table_out_of_range():
    traj = TableTrap((2, 2, 3))
    assert trajectory_position(traj, 2) == 3
    with pytest.raises(TrajectoryRangeError):
        trajectory_position(traj, 3)


@pytest.mark.parametrize("q", [0.0, 1.0, 1.5, -0.1, float("nan")])
def test_q_domain(q):
    with pytest.raises(DomainError):
        check_q(q)


def test_validate_examples():
    assert validate_trajectory(StaticTrap(3), 100).ok
    rep = validate_trajectory(TableTrap((2, 2, 1)), 2)
    assert not rep.ok and rep.tick == 2
    assert validate_trajectory(LogarithmicTrap(1 / LN2, 1.0, "floor"), 10**6).ok


def test_validate_reports_nonpositive_and_range():
    rep = validate_trajectory(TableTrap((0, 1, 2)), 2)
    assert not rep.ok and rep.tick == 0
    rep = validate_trajectory(TableTrap((1, 2)), 5)
    assert not rep.ok and rep.tick == 2


def test_bad_constructor_arguments():
    with pytest.raises(DomainError):
        StaticTrap(0)
    with pytest.raises(DomainError):
        LogarithmicTrap(-1.0, 0.0)
    with pytest.raises(DomainError):
        LogarithmicTrap(1.0, 0.0, "banker")
    with pytest.raises(DomainError):
        ConstantVelocityTrap(1, Fraction(-1, 2))


trajectories = st.one_of(
    st.builds(StaticTrap, st.integers(1, 50)),
    st.builds(ConstantVelocityTrap, st.integers(1, 20),
              st.fractions(min_value=0, max_value=3, max_denominator=7)),
    st.builds(LogarithmicTrap, st.floats(0.05, 12.0), st.floats(-5.0, 10.0),
              st.sampled_from(["floor", "nearest", "ceil"])),
)


@given(trajectories, st.integers(1, 3000))
@settings(max_examples=150, deadline=None)
def test_positions_monotone_positive_and_consistent(traj, t_max):
    x = traj.positions(t_max)
    assert x.shape == (t_max + 1,)
    assert np.all(x >= 1)
    assert np.all(np.diff(x) >= 0)
    for t in {0, 1, t_max // 2, t_max}:
        assert trajectory_position(traj, t) == x[t]


@given(st.floats(0.05, 12.0), st.floats(-5.0, 10.0), st.sampled_from(["floor", "nearest", "ceil"]),
       st.integers(1, 10**7))
@settings(max_examples=300, deadline=None)
def test_log_position_within_one_site(a, b, rounding, t):
    cont = a * math.log(t) + b
    if cont < 1:
        return
    pos = LogarithmicTrap(a, b, rounding).position(t)
    assert abs(pos - cont) < 1
    if rounding == "nearest":
        assert abs(pos - cont) <= 0.5 + 1e-9


@given(st.floats(0.01, 0.99), st.floats(0.0, 1.0, exclude_min=True))
@settings(max_examples=300, deadline=None)
def test_design_roundtrip(q, frac):
    beta = frac * (1 - q)
    if beta <= 1e-300:
        return
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        d = design_log_trajectory(q, beta)
    assert math.isclose(predicted_beta(q, d.b), beta, rel_tol=1e-12)
    assert d.a == 1 / math.log(1 / q)


def test_power_law_design_rejects_inconsistent_fields():
    with pytest.raises(DomainError):
        PowerLawDesign(0.5, 0.25, 1.0, 1.0)
    with pytest.raises(DomainError):
        PowerLawDesign(0.5, 0.3, 1 / LN2, 1.0)


def test_checkpoint_grids():
    assert np.array_equal(checkpoint_grid(4, "all"), [0, 1, 2, 3, 4])
    g = checkpoint_grid(10**7, "log", 1.05)
    assert g[0] == 0 and g[-1] == 10**7
    assert np.all(np.diff(g) > 0)
    assert np.all(g[1:21] == np.arange(1, 21))
    assert len(g) < 400
    assert np.array_equal(checkpoint_grid(1000), np.arange(1001))
    assert len(checkpoint_grid(10**6)) < 400
    with pytest.raises(DomainError):
        checkpoint_grid(10, "log", 1.0)


def test_survival_series_checks():
    SurvivalSeries([0, 1, 2], [1.0, 0.5, 0.5]).check()
    with pytest.raises(ValueError):
        SurvivalSeries([0, 1, 2], [1.0, 0.5, 0.6]).check()
    with pytest.raises(ValueError):
        SurvivalSeries([0, 2, 2], [1.0, 0.5, 0.5]).check()
    with pytest.raises(ValueError):
        SurvivalSeries([0, 1], [0.9, 0.5]).check()
    s = SurvivalSeries([0, 1, 5], [1.0, 0.5, 0.25])
    assert s.at(5) == 0.25
    with pytest.raises(KeyError):
        s.at(3)


def test_occupancy_initial_state():
    st0 = OccupancyState.initial(3)
    assert st0.survival == 1.0 and st0.conservation_error() == 0.0
    assert list(st0.mass) == [1.0, 0.0, 0.0]


def test_fit_result_invariants():
    with pytest.raises(ValueError):
        FitResult("power_law", 0.3, 1.0, (10.0, 10.0), 0.0)
    with pytest.raises(ValueError):
        FitResult("power_law", 0.3, 1.0, (1.0, 10.0), -1.0)
    assert FitResult("power_law", 0.3, 1.0, (1.0, 10.0), 0.0, stderr=0.01).band == 0.02
