import math

import numpy as np
import pytest

from radwave import errors
from radwave.decay import (
    FLOOR,
    DecayRateEstimator,
    DecaySeries,
    clearance_time,
    decay_run,
    evacuation_time,
    fit_decay,
    forced_decay_series,
    local_energy_series,
)
from radwave.linear import solve_linear
from radwave.model import DataProfile, Geometry, make_grid


def test_zero_run_gives_zero_series():
    g = make_grid(Geometry.exterior_ball(), 0.05, 5.0, 2.0)
    traj = solve_linear(g, DataProfile(None, None, 0.0), None, 5.0, stride=10)
    s = local_energy_series(traj)
    assert not s.local_energy.any()
    assert s.peak == 0.0


def test_minkowski_rejected():
    g = make_grid(Geometry.minkowski(), 0.05, 5.0, 2.0)
    traj = solve_linear(g, DataProfile(None, None, 0.0), None, 5.0, stride=10)
    with pytest.raises(errors.InvalidArgument):
        local_energy_series(traj)


def test_negative_energy_rejected():
    with pytest.raises(errors.InvalidArgument):
        DecaySeries(np.arange(3.0), np.array([1.0, -1.0, 0.0]), 4.0, 0.5)


def test_characteristic_times():
    assert clearance_time(2.0, 0.5, 4.0) == pytest.approx(5.0)
    assert evacuation_time(2.0, 0.5, 4.0) == pytest.approx(6.5)


def test_exact_exponential_rate():
    t = np.linspace(0.0, 10.0, 101)
    est = DecayRateEstimator().fit(t, np.exp(-2.0 * t))
    assert est.rate_ == pytest.approx(2.0, rel=1e-12)
    assert est.r2_ == pytest.approx(1.0, abs=1e-12)
    assert not est.below_floor_ and est.floor_time_ == math.inf


def test_floor_stops_the_window():
    t = np.linspace(0.0, 40.0, 401)
    est = DecayRateEstimator().fit(t, np.exp(-2.0 * t))
    assert est.floor_time_ == pytest.approx(t[np.argmax(np.exp(-2.0 * t) <= FLOOR)])
    assert est.rate_ == pytest.approx(2.0, rel=1e-12)


def test_series_at_floor_is_marked():
    t = np.linspace(0.0, 10.0, 50)
    s = DecaySeries(t, np.zeros_like(t), 4.0, 0.5)
    fit = fit_decay(s)
    assert fit.below_floor and fit.rate == math.inf
    assert "below floor" in fit.summary()


def test_fit_window_starts_after_forcing():
    t = np.linspace(0.0, 20.0, 201)
    E = np.where(t < 5.0, 1.0, np.exp(-(t - 5.0)))
    fit = fit_decay(DecaySeries(t, E, 4.0, 0.5, t_force_end=5.0))
    assert fit.t_start == pytest.approx(5.0)
    assert fit.rate == pytest.approx(1.0, rel=1e-12)


def test_too_few_points():
    t = np.linspace(0.0, 1.0, 10)
    with pytest.raises(errors.InsufficientData):
        fit_decay(DecaySeries(t, np.exp(-t), 4.0, 0.5))


def test_local_energy_vanishes_after_evacuation():
    # with the trailing region dropped, the local energy is exactly zero once
    # every wave has left the ball of radius 4
    _, s = decay_run(dr=0.025, T=12.0, lag=3.0)
    assert s.peak > 0
    fit = fit_decay(s, t_start=0.0)
    assert fit.floor_time <= evacuation_time(2.0, 0.5, 4.0) + 3.0
    assert s.max_after(evacuation_time(2.0, 0.5, 4.0) + 3.0) <= FLOOR


def test_residue_shrinks_under_refinement():
    a = decay_run(dr=0.05, T=10.0)[1].value_at(10.0)
    b = decay_run(dr=0.025, T=10.0)[1].value_at(10.0)
    assert b * 4 <= a


def test_forced_scenario_window():
    sc, s = forced_decay_series(4, T=12.0, dr=0.1)
    assert s.t_force_end == 1.0
    fit = fit_decay(s)
    assert fit.t_start >= 1.0
