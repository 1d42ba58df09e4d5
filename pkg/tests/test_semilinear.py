import numpy as np
import pytest

from radwave import errors
from radwave.linear import solve_linear, step_linear
from radwave.model import NULL_FORM, DataProfile, Gaussian, Geometry, QuadraticForm, make_grid, sample_data
from radwave.semilinear import RADIATION, monitor_value, nonlinear_source, ode_blowup, run, step_semilinear

Q_TT = QuadraticForm(1.0, 0.0, 0.0)


def test_zero_state_is_fixed():
    g = make_grid(Geometry.minkowski(), 0.1, 1.0, 2.0)
    z = np.zeros(g.size)
    v, p, bad = step_semilinear(z, z, 0.0, g.dt, g, Q_TT)
    assert not bad and not v.any() and not p.any()


def test_null_form_source_vanishes_when_derivatives_agree():
    g = make_grid(Geometry.minkowski(), 0.05, 1.0, 5.0)
    v, _ = sample_data(DataProfile(Gaussian(2.0, 0.5), None, 1.0), g)
    r = g.r
    p = np.zeros_like(v)
    p[1:-1] = (v[2:] - v[:-2]) / (2 * g.dr) - v[1:-1] / r[1:-1]
    src = nonlinear_source(g, NULL_FORM)(0, 0, 0.0, v, p, 0, g.size)
    full = nonlinear_source(g, QuadraticForm(1, 1, 0))(0, 0, 0.0, v, p, 0, g.size)
    assert np.max(np.abs(src)) <= 1e-14 * np.max(np.abs(full))


def test_zero_form_step_is_the_linear_step():
    g = make_grid(Geometry.minkowski(), 0.05, 1.0, 5.0)
    v, p = sample_data(DataProfile(Gaussian(2.0, 0.5), Gaussian(2.0, 0.3), 1.0), g)
    a = step_semilinear(v, p, 0.0, g.dt, g, QuadraticForm(0, 0, 0))
    b = step_linear(v, p, 0.0, g.dt, g)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_zero_form_run_reproduces_linear_solve_bitwise():
    d = DataProfile(Gaussian(3.0, 0.5), Gaussian(3.0, 0.5), 0.3)
    g = make_grid(Geometry.minkowski(), 0.05, 5.0, d.support[1])
    out = run(g, d, QuadraticForm(0, 0, 0), 5.0, stride=None)
    lin = solve_linear(g, d, None, 5.0, stride=None)
    assert out.survived
    assert np.array_equal(out.trajectory.final_v, lin.final_v)
    assert np.array_equal(out.trajectory.final_p, lin.final_p)


def test_cfl_violation_refused():
    g = make_grid(Geometry.minkowski(), 0.1, 1.0, 2.0)
    z = np.zeros(g.size)
    with pytest.raises(errors.InvalidArgument):
        step_semilinear(z, z, 0.0, 0.15, g, Q_TT)


@pytest.mark.parametrize("dt", [1e-3, 1e-2])
def test_ode_blowup_time(dt):
    threshold = 1e4
    t = ode_blowup(1.0, dt, threshold)
    assert abs(t - 1.0) <= 2 * dt + 1.0 / threshold
    assert ode_blowup(0.0, dt, threshold) is None


def test_zero_data_survives_with_zero_norms():
    g = make_grid(Geometry.minkowski(), 0.1, 10.0, 2.0)
    out = run(g, DataProfile(None, None, 0.0), Q_TT, 10.0)
    assert out.survived
    assert not out.norm_log["energy"].any() and not out.norm_log["kss"].any()


def test_small_data_energy_is_linear_in_eps():
    g = make_grid(Geometry.minkowski(), 0.05, 20.0, 6.0)
    sups = []
    for eps in (0.005, 0.01):
        d = DataProfile(Gaussian(3.0, 0.5), Gaussian(3.0, 0.5), eps)
        out = run(g, d, Q_TT, 20.0)
        assert out.survived
        sups.append(float(np.max(out.norm_log["energy"])) / eps)
    assert sups[1] == pytest.approx(sups[0], rel=0.05)


def test_large_data_blows_up_consistently_under_refinement():
    times = []
    for dr in (0.02, 0.01):
        d = DataProfile(Gaussian(3.0, 0.5), None, 2.0)
        g = make_grid(Geometry.minkowski(), dr, 6.0, d.support[1])
        out = run(g, d, Q_TT, 6.0, log_norms=False)
        assert out.blowup is not None and out.blowup[1] == "threshold"
        times.append(out.t_star)
    assert abs(times[1] - times[0]) <= 0.05 * times[1]


def test_threshold_must_exceed_initial_value():
    d = DataProfile(Gaussian(3.0, 0.5), None, 1.0)
    g = make_grid(Geometry.minkowski(), 0.05, 2.0, d.support[1])
    v, p = sample_data(d, g)
    m0 = monitor_value(v, p, g, 0, g.size)
    with pytest.raises(errors.InvalidArgument):
        run(g, d, Q_TT, 2.0, threshold=2 * m0)
    with pytest.raises(errors.InvalidArgument):
        run(g, d, Q_TT, 2.0, monitor="energy")


def test_radiation_monitor_is_r_weighted():
    d = DataProfile(Gaussian(5.0, 0.5), None, 1.0)
    g = make_grid(Geometry.minkowski(), 0.05, 2.0, d.support[1])
    v, p = sample_data(d, g)
    sup = monitor_value(v, p, g, 0, g.size)
    rad = monitor_value(v, p, g, 0, g.size, RADIATION)
    assert 3.0 * sup < rad < 7.0 * sup
