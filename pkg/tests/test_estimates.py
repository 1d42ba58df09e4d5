import numpy as np
import pytest

from radwave import errors
from radwave.estimates import (
    DATA_CENTER,
    ESTIMATE_IDS,
    MINKOWSKI_IDS,
    random_scenario,
    run_battery,
    run_scenario,
    sides,
    verify_estimate,
    zero_scenario,
)
from radwave.model import Geometry


@pytest.mark.parametrize("eid", MINKOWSKI_IDS)
def test_zero_scenario_gives_zero_sides(eid):
    rep = verify_estimate(eid, zero_scenario(T=5.0))
    assert not rep.lhs.any() and not rep.rhs.any()
    assert rep.max_ratio == 0.0 and rep.valid


def test_zero_exterior_scenario():
    rep = verify_estimate("E4.3", zero_scenario(Geometry.exterior_ball(), T=5.0))
    assert rep.max_ratio == 0.0


def test_admissibility():
    with pytest.raises(errors.InvalidArgument):
        verify_estimate("E9.9", zero_scenario())
    with pytest.raises(errors.InvalidArgument):
        verify_estimate("E4.3", zero_scenario())
    with pytest.raises(errors.InvalidArgument):
        verify_estimate("E2.1", zero_scenario(Geometry.exterior_ball()))
    with pytest.raises(errors.InvalidArgument):
        verify_estimate("E4.3", random_scenario(1, Geometry.minkowski(), 5.0))


def test_scenarios_are_seeded():
    a = random_scenario(7, T=50.0)
    b = random_scenario(7, T=50.0)
    c = random_scenario(8, T=50.0)
    assert a.describe() == b.describe() != c.describe()
    lo, hi = DATA_CENTER
    assert lo <= a.data.f_shape.center <= hi
    ext = random_scenario(7, Geometry.exterior_ball(), 50.0)
    assert not ext.has_data and ext.forcing.t_stop == 1.0
    assert ext.forcing.r_support[0] > ext.geometry.R0


def test_free_wave_kss_ratio_stays_flat():
    sc = random_scenario(3, Geometry.minkowski(), T=200.0, dr=0.1, forcing=False)
    rep = verify_estimate("E2.1", sc)
    assert rep.valid and np.isfinite(rep.max_ratio)
    assert rep.tail_slope <= 0.01


def test_all_sides_from_one_run():
    sc = random_scenario(5, Geometry.minkowski(), T=40.0, dr=0.1, forcing=True)
    series = run_scenario(sc, N=1)
    for eid in MINKOWSKI_IDS:
        lhs, rhs = sides(eid, series, N=1)
        assert lhs.shape == rhs.shape == series.t.shape
        assert np.all(lhs >= 0) and np.all(rhs > 0)


def test_exterior_local_bound_is_bounded():
    sc = random_scenario(2, Geometry.exterior_ball(), T=60.0, dr=0.1)
    rep = verify_estimate("E4.3", sc)
    assert rep.valid
    late = rep.times >= 20.0
    assert np.ptp(rep.ratio[late]) < 0.02 * rep.max_ratio


def test_battery_order_and_threads_agree():
    ids = ["E2.1", "E4.3"]
    one = run_battery(ids, [0, 1], T=20.0, dr=0.2, N=1, threads=1)
    two = run_battery(ids, [1, 0], T=20.0, dr=0.2, N=1, threads=2)
    assert [(r.estimate_id, r.extra["seed"]) for r in one] == \
        [("E2.1", 0), ("E2.1", 1), ("E4.3", 0), ("E4.3", 1)]
    for a, b in zip(one, two):
        assert np.array_equal(a.ratio, b.ratio)
    assert ESTIMATE_IDS[-1] == "E4.3"
