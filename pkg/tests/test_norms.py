import math

import numpy as np
import pytest

from radwave import errors
from radwave.linear import oracle_u_prime, solve_linear
from radwave.model import DataProfile, Gaussian, Geometry, make_grid, sample_data
from radwave.norms import (
    KssAccumulator,
    NormConfig,
    RatioReport,
    annulus_sup_check,
    derivative_fields,
    discrete_energy,
    dyadic_profile,
    energy,
    kss_accumulate,
    log_times,
    multi_indices,
    observe_trajectory,
    physical_prime,
    safe_ratio,
    tail_slope,
)

ZERO = DataProfile(None, None, 0.0)


def test_zero_state_energy():
    g = make_grid(Geometry.minkowski(), 0.1, 1.0, 1.0)
    z = np.zeros(g.size)
    assert energy(z, z, g) == 0.0
    assert discrete_energy(z, z, g) == 0.0


def test_gaussian_energy_closed_form():
    # u = exp(-r^2): ||u'||^2 = 16 pi int r^4 exp(-2 r^2) dr = 3 pi^(3/2) / (2 sqrt 2)
    g = make_grid(Geometry.minkowski(), 0.01, 1.0, 6.5)
    v, p = sample_data(DataProfile(Gaussian(0.0, 1.0), None, 1.0), g)
    exact = 3.0 * math.pi**1.5 / (2.0 * math.sqrt(2.0))
    assert exact == pytest.approx(5.906, abs=5e-4)
    assert energy(v, p, g) ** 2 == pytest.approx(exact, rel=1e-4)


def test_energy_is_homogeneous():
    g = make_grid(Geometry.minkowski(), 0.05, 1.0, 5.0)
    v, p = sample_data(DataProfile(Gaussian(2.0, 0.5), Gaussian(2.5, 0.4), 1.0), g)
    assert energy(3.5 * v, 3.5 * p, g) == pytest.approx(3.5 * energy(v, p, g), rel=1e-13)


def test_energy_rejects_non_finite():
    g = make_grid(Geometry.minkowski(), 0.1, 1.0, 1.0)
    v = np.zeros(g.size)
    v[3] = np.inf
    with pytest.raises(errors.InvalidArgument):
        energy(v, np.zeros(g.size), g)


def test_derivative_order_limited():
    with pytest.raises(errors.InvalidArgument):
        NormConfig(N=3)
    assert multi_indices(1) == [(0, 0), (1, 0), (0, 1)]
    assert len(multi_indices(2)) == 6


def test_kss_accumulator_sequence_checks():
    g = make_grid(Geometry.minkowski(), 0.1, 1.0, 1.0)
    z = np.zeros(g.size)
    acc = KssAccumulator.start(z, z, g)
    acc = kss_accumulate(acc, z, z, g, 0.05, 0.05)
    assert acc.value == 0.0 and acc.normalized == 0.0
    with pytest.raises(errors.InvalidSequence):
        kss_accumulate(acc, z, z, g, 0.3, 0.05)
    with pytest.raises(errors.InvalidSequence):
        kss_accumulate(acc, z, z, g, 0.05, 0.0)


def test_zero_trajectory_norm_series():
    g = make_grid(Geometry.minkowski(), 0.1, 4.0, 1.0)
    traj = solve_linear(g, ZERO, None, 4.0, stride=1)
    s = observe_trajectory(traj)
    assert not s.kss[(0, 0)].any()
    assert not s.energy_sq[(0, 0)].any()
    prof = dyadic_profile(s, 4.0)
    assert not prof["annulus"].any() and prof["unit_ball"] == 0.0


@pytest.fixture(scope="module")
def free_wave():
    g = make_grid(Geometry.minkowski(), 0.05, 20.0, 4.0)
    d = DataProfile(Gaussian(2.0, 0.5), Gaussian(2.0, 0.5), 1.0)
    return d, solve_linear(g, d, None, 20.0, stride=1)


def test_observer_energy_is_conserved(free_wave):
    _, traj = free_wave
    s = observe_trajectory(traj)
    e = np.sqrt(s.energy_sq[(0, 0)])
    assert np.ptp(e) / e[0] < 5e-3


def test_dyadic_profile_reassembles_global_norm(free_wave):
    _, traj = free_wave
    prof = dyadic_profile(traj, 16.0)
    whole = prof["global_kss"] ** 2
    assembled = prof["unit_ball"] ** 2 + prof["all_annuli_kss_sq"]
    # (1 + r)^-1 against 1 on the unit ball: comparable within a factor 2
    assert 0.5 <= whole / assembled <= 1.0 + 1e-6
    assert np.all(prof["annulus"] >= prof["annulus_kss"])
    assert np.all(prof["annulus"] <= math.sqrt(2.0) * prof["annulus_kss"] * (1 + 1e-9))


def test_radial_fields_and_rotations(free_wave):
    _, traj = free_wave
    short = type(traj)(traj.grid, traj.times[:20], traj.v[:20], traj.p[:20], traj.dt,
                       1, 19)
    f0 = derivative_fields(short, 0)
    assert list(f0.fields) == [(0, 0)]
    ut, ur = f0.fields[(0, 0)]
    a, b = physical_prime(short.v[5], short.p[5], short.grid)
    assert np.array_equal(ut[5], a) and np.array_equal(ur[5], b)
    om = derivative_fields(short, 1).omega(1)
    assert not om[0].any() and not om[1].any()


def _dt_error(dr):
    T = 2.0
    d = DataProfile(Gaussian(4.0, 0.6), None, 1.0)
    g = make_grid(Geometry.minkowski(), dr, T + 0.5, d.support[1])
    traj = solve_linear(g, d, None, T + 0.5, stride=1)
    i = int(round(T / traj.dt))
    sub = type(traj)(g, traj.times[i - 2:i + 3], traj.v[i - 2:i + 3], traj.p[i - 2:i + 3],
                     traj.dt, 1, 4)
    fields = derivative_fields(sub, 1).fields[(1, 0)]
    sel = (g.r > 1.0) & (g.r < 8.0)
    exact_t, exact_r = oracle_u_prime(d, 0.0, traj.times[i], g.r[sel], dt_order=1)
    return max(np.max(np.abs(fields[0][2][sel] - exact_t)),
               np.max(np.abs(fields[1][2][sel] - exact_r)))


def test_time_derivative_of_u_prime_is_second_order():
    e1, e2 = _dt_error(0.04), _dt_error(0.02)
    assert np.log2(e1 / e2) > 1.8


def test_annulus_check_zero_and_constant_and_inverse_r():
    assert annulus_sup_check(lambda r: 0.0 * r, 8.0) == (0.0, 0.0)
    lhs, rhs = annulus_sup_check(lambda r: np.full_like(r, 3.0), 8.0)
    assert lhs == 3.0
    # ||3||_{L2(R/4 < |x| < 2R)} / R = 3 sqrt(4 pi (8 - 1/64) R^3 / 3) / R
    assert rhs == pytest.approx(3.0 * math.sqrt(4 * math.pi * (8 - 1 / 64) * 8.0 / 3.0), rel=1e-6)
    for R in (2.0, 16.0, 256.0):
        lhs, _ = annulus_sup_check(lambda r: 1.0 / r, R)
        assert lhs == pytest.approx(2.0 / R, rel=1e-12)


def test_annulus_check_sampled_input():
    r = np.linspace(0.0, 40.0, 4001)
    a = annulus_sup_check(np.exp(-r / 5), 8.0, r=r)
    b = annulus_sup_check(lambda x: np.exp(-x / 5), 8.0)
    assert a[0] == pytest.approx(b[0], rel=1e-3)
    assert a[1] == pytest.approx(b[1], rel=1e-4)
    with pytest.raises(errors.InvalidArgument):
        annulus_sup_check(np.ones(10), 8.0, r=np.linspace(2, 16, 10))
    with pytest.raises(errors.InvalidArgument):
        annulus_sup_check(lambda x: x, 1.0)


def test_ratio_report_conventions():
    assert list(safe_ratio([0.0, 1.0, 2.0], [0.0, 0.0, 4.0])) == [0.0, math.inf, 0.5]
    t = log_times(100.0)
    rep = RatioReport("E2.1", "zero", t, np.zeros_like(t), np.zeros_like(t))
    assert rep.max_ratio == 0.0 and rep.valid and rep.tail_slope == 0.0
    with pytest.raises(errors.InvalidArgument):
        RatioReport("E2.1", "bad", t, -np.ones_like(t), np.ones_like(t))


def test_tail_slope_of_log_line():
    t = log_times(1000.0)
    assert tail_slope(t, 0.3 * np.log(t) + 1.0, 1000.0) == pytest.approx(0.3, rel=1e-10)
    assert t[-1] == 1000.0
