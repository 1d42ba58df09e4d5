import math

import numpy as np
import pytest
from scipy.integrate import quad

from radwave import errors
from radwave.model import (
    MEMORY_ENV,
    NULL_FORM,
    Bump,
    DataProfile,
    Gaussian,
    Geometry,
    QuadraticForm,
    SmoothBox,
    make_grid,
    parse_form,
    parse_profile,
    sample_data,
    u_from_v,
    u_prime,
)


def test_minkowski_grid_reaches_support_plus_horizon():
    g = make_grid(Geometry.minkowski(), 0.1, 10.0, 2.0)
    assert g.r_max >= 12.2 - 1e-12
    assert g.n >= 122
    assert g.r[0] == 0.0
    assert len(g.r) == g.n + 1


def test_exterior_grid_reaches_support_plus_horizon():
    g = make_grid(Geometry.exterior_ball(0.5), 0.05, 20.0, 3.0)
    assert g.r_max >= 23.1 - 1e-12
    assert g.r[0] == 0.5


@pytest.mark.parametrize("dr", [0.0, -0.1])
def test_grid_rejects_bad_step(dr):
    with pytest.raises(errors.InvalidArgument):
        make_grid(Geometry.minkowski(), dr, 10.0, 2.0)


def test_geometry_preconditions():
    with pytest.raises(errors.InvalidArgument):
        Geometry("minkowski", 1.0)
    with pytest.raises(errors.InvalidArgument):
        Geometry.exterior_ball(0.0)
    with pytest.raises(errors.InvalidArgument):
        Geometry("torus", 0.0)


def test_memory_cap_from_environment(monkeypatch):
    monkeypatch.setenv(MEMORY_ENV, "0.001")
    with pytest.raises(errors.ResourceLimit):
        make_grid(Geometry.minkowski(), 0.001, 100.0, 2.0)


def test_zero_eps_samples_to_zero():
    g = make_grid(Geometry.minkowski(), 0.1, 5.0, 4.0)
    v0, p0 = sample_data(DataProfile(Gaussian(3.0, 0.25), Gaussian(3.0, 0.5), 0.0), g)
    assert not v0.any() and not p0.any()


def test_reduced_value_is_r_times_u():
    g = make_grid(Geometry.minkowski(), 0.05, 5.0, 4.0)
    v0, _ = sample_data(DataProfile(Gaussian(3.0, 0.25), None, 0.1), g)
    i = g.index_of(3.0)
    assert g.r[i] == pytest.approx(3.0)
    assert v0[i] == pytest.approx(0.3, rel=1e-12)


def test_exterior_data_must_clear_the_wall():
    g = make_grid(Geometry.exterior_ball(0.5), 0.05, 5.0, 2.0)
    with pytest.raises(errors.InvalidArgument):
        sample_data(DataProfile(Bump(1.0, 0.5), None, 1.0), g)


def test_dirichlet_node_is_zero():
    g = make_grid(Geometry.exterior_ball(0.5), 0.05, 5.0, 2.0)
    v0, p0 = sample_data(DataProfile(Bump(1.5, 0.5), Bump(1.5, 0.5), 1.0), g)
    assert v0[0] == 0.0 and p0[0] == 0.0


@pytest.mark.parametrize("form, ut, ur, expected", [
    ((1, 0, 0), 2.0, 5.0, 4.0),
    ((1, -1, 0), 3.0, 3.0, 0.0),
    ((1, 2, 1), 1.0, 2.0, 11.0),
])
def test_quadratic_form_values(form, ut, ur, expected):
    assert QuadraticForm(*form)(ut, ur) == expected


def test_null_form_and_cross_term_flag():
    assert NULL_FORM == QuadraticForm(1.0, -1.0, 0.0)
    assert NULL_FORM.rotation_invariant
    assert not QuadraticForm(1, 0, 1).rotation_invariant
    assert "cross term" in QuadraticForm(1, 0, 1).describe()


def test_parse_form_and_profile():
    assert parse_form("1,-1,0") == NULL_FORM
    assert parse_form([1, 2, 1]) == QuadraticForm(1, 2, 1)
    with pytest.raises(errors.InvalidArgument):
        parse_form("1,2")
    assert parse_profile("gaussian:3,0.5") == Gaussian(3.0, 0.5)
    assert parse_profile("bump:1.5,0.5") == Bump(1.5, 0.5)
    assert parse_profile("box:1,2,0.05") == SmoothBox(1.0, 2.0, 0.05)
    with pytest.raises(errors.InvalidArgument):
        parse_profile("sinc:1,2")


@pytest.mark.parametrize("profile", [Gaussian(2.0, 0.4), Bump(2.0, 0.7), SmoothBox(1.0, 2.0, 0.1)])
def test_profile_derivatives_match_differences(profile):
    r = np.linspace(0.6, 3.2, 301)
    h = 1e-5
    fd1 = (profile(r + h) - profile(r - h)) / (2 * h)
    fd2 = (profile(r + h) - 2 * profile(r) + profile(r - h)) / h**2
    assert np.allclose(profile.d1(r), fd1, atol=1e-6)
    assert np.allclose(profile.d2(r), fd2, atol=2e-3)


@pytest.mark.parametrize("profile", [Gaussian(2.0, 0.4), SmoothBox(1.0, 2.0, 0.1)])
def test_weighted_antiderivative_matches_quadrature(profile):
    a, b = 0.8, 2.7
    val = profile.weighted_antiderivative(b) - profile.weighted_antiderivative(a)
    ref = quad(lambda x: x * float(profile(x)), a, b, limit=200)[0]
    assert float(val) == pytest.approx(ref, rel=1e-10)


def test_bump_has_no_closed_antiderivative():
    with pytest.raises(errors.UnsupportedProfile):
        Bump(1.5, 0.5).weighted_antiderivative(1.0)


def test_outgoing_data_velocity():
    d = DataProfile(Gaussian(5.0, 1.0), None, 0.2, outgoing=True)
    r = np.linspace(1.0, 9.0, 17)
    h = 1e-6
    dv = (d.v0(r + h) - d.v0(r - h)) / (2 * h)
    assert np.allclose(d.p0(r), -dv, atol=1e-8)


def test_u_from_v_and_u_prime_at_origin():
    g = make_grid(Geometry.minkowski(), 0.01, 1.0, 2.0)
    r = g.r
    u = np.exp(-r**2)
    u_rec = u_from_v(r * u, g)
    assert np.max(np.abs(u_rec - u)) < 1e-3
    ut, ur = u_prime(r * u, np.zeros_like(r), g)
    assert ur[0] == 0.0
    away = (r > 0.1) & (r < 3.0)
    assert np.max(np.abs(ur[away] + 2 * r[away] * u[away])) < 1e-3
    assert not ut.any()


def test_u_prime_scales_linearly():
    g = make_grid(Geometry.minkowski(), 0.05, 1.0, 4.0)
    d = DataProfile(Gaussian(2.0, 0.5), Gaussian(2.0, 0.5), 1.0)
    v, p = sample_data(d, g)
    a = u_prime(v, p, g)
    b = u_prime(3 * v, 3 * p, g)
    assert np.allclose(3 * a[0], b[0]) and np.allclose(3 * a[1], b[1])
    assert math.isfinite(float(np.sum(a[0])))
