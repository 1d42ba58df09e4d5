"""Local energy decay outside the ball and the local space-time bound.

In the reduced half-line problem with a Dirichlet wall every wave is
outgoing after at most one reflection, so the local energy on {R0 < r < R}
vanishes exactly once the last in-going characteristic has left: data in
[a, b] clears {r < R} by t = (b - R0) + (R - R0).  What remains numerically
is the scheme's dispersive residue, which must shrink under refinement.
"""

PRODUCTION_DR = 0.00625

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import InsufficientData, InvalidArgument
from .estimates import random_scenario, run_scenario
from .linear import solve_linear
from .model import Bump, DataProfile, Geometry, make_grid
from .norms import FOUR_PI, energy_density, region_weights

FLOOR = 1e-24
MIN_POINTS = 16


@dataclass
class DecaySeries:
    """Local energy ||u'(t)||^2 over {R0 < r < radius} at stored times."""

    times: np.ndarray
    local_energy: np.ndarray
    radius: float
    R0: float
    t_force_end: float = 0.0

    def __post_init__(self):
        if np.any(self.local_energy < 0):
            raise InvalidArgument("local energy must be non-negative")

    @property
    def peak(self):
        return float(np.max(self.local_energy)) if len(self.local_energy) else 0.0

    def value_at(self, t):
        i = min(int(np.searchsorted(self.times, t - 1e-12 * max(1.0, t))), len(self.times) - 1)
        return float(self.local_energy[i])

    def max_after(self, t):
        sel = self.times >= t - 1e-12 * max(1.0, t)
        return float(np.max(self.local_energy[sel])) if np.any(sel) else 0.0


def local_energy_series(trajectory, radius=4.0, t_force_end=0.0):
    """Local energy on {R0 < r < radius} at every stored time of a run."""
    grid = trajectory.grid
    if not grid.geometry.is_exterior:
        raise InvalidArgument("local energy decay is measured outside the ball")
    if trajectory.v is None:
        raise InvalidArgument("trajectory stores no states")
    w = region_weights(grid, grid.R0, radius)
    vals = np.array([FOUR_PI * float(np.dot(w, energy_density(v, p, grid)))
                     for v, p in zip(trajectory.v, trajectory.p)])
    return DecaySeries(np.array(trajectory.times), np.maximum(vals, 0.0), float(radius),
                       grid.R0, float(t_force_end))


def clearance_time(data_outer, R0, radius):
    """Exact time at which the last in-going characteristic leaves {r < radius}."""
    return (data_outer - R0) + (radius - R0)


def evacuation_time(data_outer, R0, radius):
    """Conservative evacuation time used by the decay check.

    The exact clearance time plus one more in-going leg (b - R0), which
    leaves room for the slow dispersive tail of the scheme.
    """
    return clearance_time(data_outer, R0, radius) + (data_outer - R0)


@dataclass
class DecayFit:
    """Exponential rate on the post-forcing window, or the floor marker."""

    rate: float
    intercept: float
    r_squared: float
    n_points: int
    t_start: float
    floor_time: float
    below_floor: bool

    def summary(self):
        if self.below_floor:
            return f"below floor ({FLOOR:g}) from t = {self.floor_time!r}"
        return (f"rate = {self.rate!r} r_squared = {self.r_squared!r} "
                f"points = {self.n_points} floor_time = {self.floor_time!r}")


class DecayRateEstimator(BaseEstimator):
    """Fit ln E(t) = -rate*t + b on samples above ``floor``.

    ``fit(t, E)`` stops the window at the first sample below the floor.
    When no sample starts above the floor, ``below_floor_`` is set and the
    rate is infinite.
    """

    def __init__(self, floor=FLOOR, min_points=MIN_POINTS):
        self.floor = floor
        self.min_points = min_points

    def fit(self, t, E):
        t = np.asarray(t, dtype=float)
        E = np.asarray(E, dtype=float)
        if len(t) < self.min_points:
            raise InsufficientData(f"need at least {self.min_points} samples, have {len(t)}")
        low = np.flatnonzero(E <= self.floor)
        stop = int(low[0]) if len(low) else len(E)
        self.floor_time_ = float(t[stop]) if stop < len(E) else math.inf
        if stop == 0:
            self.below_floor_ = True
            self.rate_, self.intercept_, self.r2_ = math.inf, -math.inf, 1.0
            self.n_points_ = 0
            return self
        self.below_floor_ = False
        x, y = t[:stop], np.log(E[:stop])
        self.n_points_ = stop
        if stop < 2:
            self.rate_, self.intercept_, self.r2_ = math.inf, float(y[0]), 1.0
            return self
        slope, icpt = np.polyfit(x, y, 1)
        res = y - (slope * x + icpt)
        ss = float(np.sum((y - y.mean()) ** 2))
        self.rate_ = float(-slope)
        self.intercept_ = float(icpt)
        self.r2_ = 1.0 - float(np.sum(res**2)) / ss if ss > 0 else 1.0
        return self


def fit_decay(series, t_start=None, floor=FLOOR):
    """Fit on t >= t_start (default: end of forcing support)."""
    t0 = series.t_force_end if t_start is None else float(t_start)
    sel = series.times >= t0 - 1e-12 * max(1.0, t0)
    t, E = series.times[sel], series.local_energy[sel]
    if len(t) < MIN_POINTS:
        raise InsufficientData(f"only {len(t)} samples after t = {t0:g} (need {MIN_POINTS})")
    est = DecayRateEstimator(floor=floor).fit(t, E)
    return DecayFit(est.rate_, est.intercept_, est.r2_, est.n_points_, float(t[0]),
                    est.floor_time_, est.below_floor_)


# ---------------------------------------------------------------------------
# Scenarios


def default_data(eps=1.0):
    """Bump data with support [1, 2] (clear of the wall at R0 = 1/2)."""
    return DataProfile(Bump(1.5, 0.5), None, eps)


def decay_run(dr=PRODUCTION_DR, T=12.0, R0=0.5, radius=4.0, data=None, stride=None, lag=None):
    """Free exterior run with stored states; returns (trajectory, series).

    ``lag`` drops the region r < R0 + t - lag, where the exact solution is
    zero once every wave is outgoing; it removes the dispersive residue.
    """
    data = data or default_data()
    geom = Geometry.exterior_ball(R0)
    grid = make_grid(geom, dr, T, data.support[1])
    if stride is None:
        stride = max(1, int(round(0.05 / grid.dt)))
    traj = solve_linear(grid, data, None, T, stride=stride, lag=lag)
    return traj, local_energy_series(traj, radius)


def evacuation_check(dr=PRODUCTION_DR, T=12.0, R0=0.5, radius=4.0, t_check=10.0):
    """Peak local energy, the largest value after evacuation, and E(t_check)."""
    data = default_data()
    traj, s = decay_run(dr, T, R0, radius, data)
    t_ev = evacuation_time(data.support[1], R0, radius)
    return {"t_evac": t_ev, "peak": s.peak, "after": s.max_after(t_ev),
            "residual": s.value_at(t_check), "series": s}


@dataclass
class LocalBoundReport:
    """||w'||_{[0,t] x {|x|<R}} / int_0^t ||F|| for one forced scenario."""

    seed: int
    times: np.ndarray
    ratio: np.ndarray

    @property
    def max_ratio(self):
        return float(np.max(self.ratio))

    @property
    def final_ratio(self):
        return float(self.ratio[-1])


def local_bound_check(seeds, T=60.0, dr=0.05, radius=2.0):
    """Space-time local norm over ball-radius R against integrated forcing.

    Exterior scenarios from the estimates battery: zero data, forcing
    supported in t in [0, 1].  Ratios are sampled after the forcing starts.
    """
    out = []
    for s in seeds:
        sc = random_scenario(s, Geometry.exterior_ball(), T, dr)
        series = run_scenario(sc, N=0)
        if radius not in series.ball:
            raise InvalidArgument(f"ball radius {radius} not collected")
        lhs = np.sqrt(np.maximum(series.ball[radius], 0.0))
        rhs = series.force_int[(0, 0)]
        use = rhs > 1e-3 * rhs[-1]
        out.append(LocalBoundReport(s, series.t[use], lhs[use] / rhs[use]))
    return out


def forced_decay_series(seed, T=30.0, dr=0.05, radius=4.0):
    """Local energy for a forced exterior scenario (forcing ends at t = 1)."""
    sc = random_scenario(seed, Geometry.exterior_ball(), T, dr)
    grid = make_grid(sc.geometry, dr, T, sc.support_radius)
    stride = max(1, int(round(0.05 / grid.dt)))
    traj = solve_linear(grid, DataProfile(None, None, 0.0), sc.forcing, T, stride=stride)
    s = local_energy_series(traj, radius, t_force_end=sc.forcing.t_stop)
    return sc, s


__all__ = ["DecaySeries", "DecayFit", "DecayRateEstimator", "LocalBoundReport",
           "local_energy_series", "fit_decay", "evacuation_time", "clearance_time", "decay_run",
           "evacuation_check", "local_bound_check", "forced_decay_series", "default_data"]
