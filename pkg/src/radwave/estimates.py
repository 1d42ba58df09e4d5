"""Scenario battery: both sides of each linear estimate, sampled in time.

Estimate ids:
  E2.1  ln(2+t)^(-1/2) ||(1+r)^(-1/2) u'||_{[0,t]}      KSS bound
  E2.2  ||u'||_{[0,t] x {|x|<1}}                         unit-ball bound
  E2.3  (1+t)^(-1/2) ||u'||_{[0,t]}                      energy/Young bound
  E2.4  max_j ||r^(-1/2) u'||_{[0,t] x {2^j<=|x|<=2^(j+1)}}, 2^j <= t
  E2.5  ||u||_{[0,t] x {|x|<1}}                          local L2 bound
  E2.6  sum_{|a|<=N} (||Z^a u'(t)|| + KSS_a(t))           higher-order bound
  E4.3  the E2.6 sum for zero data outside the ball, with the extra sup and
        space-time forcing terms on the right.
The right side of E2.x is ||u'(0)|| + int_0^t ||G|| (summed over |a| <= N
for E2.6).  Constants are not assumed; the report carries the ratio.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .linear import ForcingField, solve_linear
from .model import Bump, DataProfile, Gaussian, Geometry, Profile, make_grid
from .norms import NormObserver, RatioReport, log_times

ESTIMATE_IDS = ("E2.1", "E2.2", "E2.3", "E2.4", "E2.5", "E2.6", "E4.3")
MINKOWSKI_IDS = ESTIMATE_IDS[:-1]

# Randomization ranges for the battery (documented in the README).
DATA_CENTER = (1.0, 3.0)
DATA_WIDTH = (0.3, 0.6)
F_AMPLITUDE = (0.5, 1.5)
G_AMPLITUDE = (-0.5, 0.5)
FORCE_AMPLITUDE = (-1.0, 1.0)
FORCE_T_CENTER = (1.0, 4.0)
FORCE_T_HALFWIDTH = (0.5, 1.5)
EXT_FORCE_CENTER = (1.6, 3.0)
EXT_FORCE_HALFWIDTH = (0.4, 0.6)


@dataclass(frozen=True)
class Scenario:
    """One linear run: geometry, data, forcing, horizon, grid step and seed."""

    geometry: Geometry
    data: DataProfile = None
    forcing: ForcingField = None
    T: float = 100.0
    dr: float = 0.1
    seed: int = 0
    cfl: float = 0.5

    @property
    def support_radius(self):
        hi = self.geometry.R0
        if self.data is not None and not self.data.is_zero:
            hi = max(hi, self.data.support[1])
        if self.forcing is not None:
            hi = max(hi, self.forcing.r_support[1])
        return hi

    @property
    def has_data(self):
        return self.data is not None and not self.data.is_zero

    def describe(self):
        d = self.data.describe() if self.has_data else "data=0"
        g = self.forcing.describe() if self.forcing is not None else "G=0"
        return f"{self.geometry.kind} seed={self.seed} T={self.T:g} dr={self.dr:g} {d} {g}"


def random_scenario(seed, geometry=None, T=1000.0, dr=0.1, forcing=None):
    """Seeded scenario drawn from the documented ranges.

    Minkowski: Gaussian f and g data and, with probability 1/2 (or when
    ``forcing`` is True), a separable forcing.  Exterior ball: zero data and
    a forcing supported in t in [0, 1].
    """
    geometry = geometry or Geometry.minkowski()
    rng = np.random.default_rng(seed)
    u = lambda lo_hi: float(rng.uniform(*lo_hi))
    if geometry.is_exterior:
        rho = Bump(u(EXT_FORCE_CENTER), u(EXT_FORCE_HALFWIDTH))
        amp = u(FORCE_AMPLITUDE)
        amp = amp if abs(amp) > 0.1 else 0.1
        G = ForcingField(amp, Bump(0.5, 0.5), rho)
        return Scenario(geometry, None, G, T, dr, seed)
    f = Gaussian(u(DATA_CENTER), u(DATA_WIDTH))
    g = Gaussian(u(DATA_CENTER), u(DATA_WIDTH))
    fa, ga = u(F_AMPLITUDE), u(G_AMPLITUDE)
    # DataProfile has one amplitude; g carries its own through a scale factor
    data = DataProfile(f, _Scaled(g, ga / fa), fa)
    with_forcing = bool(rng.uniform() < 0.5) if forcing is None else bool(forcing)
    G = None
    if with_forcing:
        tau = Bump(u(FORCE_T_CENTER), u(FORCE_T_HALFWIDTH))
        tau = Bump(max(tau.center, tau.halfwidth), tau.halfwidth)
        rho = Gaussian(u(DATA_CENTER), u(DATA_WIDTH))
        G = ForcingField(u(FORCE_AMPLITUDE), tau, rho)
    return Scenario(geometry, data, G, T, dr, seed)


class _Scaled(Profile):
    """Profile multiplied by a constant (keeps closed forms)."""

    def __init__(self, base, k):
        self.base = base
        self.k = float(k)
        self.kind = base.kind

    def __call__(self, r):
        return self.k * self.base(r)

    def d1(self, r):
        return self.k * self.base.d1(r)

    def d2(self, r):
        return self.k * self.base.d2(r)

    @property
    def support(self):
        return self.base.support

    def weighted_antiderivative(self, x):
        return self.k * self.base.weighted_antiderivative(x)

    def spec(self):
        return f"{self.k!r}*{self.base.spec()}"


def zero_scenario(geometry=None, T=10.0, dr=0.1):
    return Scenario(geometry or Geometry.minkowski(), None, None, T, dr, 0)


def check_admissible(estimate_id, scenario):
    if estimate_id not in ESTIMATE_IDS:
        raise InvalidArgument(f"unknown estimate id {estimate_id!r}")
    if estimate_id == "E4.3":
        if not scenario.geometry.is_exterior:
            raise InvalidArgument("E4.3 needs the exterior-ball geometry")
        if scenario.has_data:
            raise InvalidArgument("E4.3 needs zero initial data")
    elif scenario.geometry.is_exterior:
        raise InvalidArgument(f"{estimate_id} is a whole-space estimate")


def run_scenario(scenario, N=0, lag=None):
    """Linear run with on-the-fly norms; returns the NormSeries."""
    grid = make_grid(scenario.geometry, scenario.dr, scenario.T,
                     scenario.support_radius, scenario.cfl)
    obs = NormObserver(grid, N=N, ball_radii=(1.0, 2.0), local_radii=(4.0,),
                       annuli=True, forcing=scenario.forcing)
    data = scenario.data if scenario.has_data else DataProfile(None, None, 0.0)
    solve_linear(grid, data, scenario.forcing, scenario.T, stride=None, observer=obs,
                 lag=lag)
    return obs.series


def sides(estimate_id, series, N=0):
    """lhs(t) and rhs(t) per step for one estimate from a NormSeries."""
    t = series.t
    e00 = (0, 0)
    data0 = math.sqrt(series.energy_sq[e00][0])
    f0 = series.force_int[e00]
    if estimate_id == "E2.1":
        return series.kss_normalized(e00), data0 + f0
    if estimate_id == "E2.2":
        return np.sqrt(series.ball[1.0]), data0 + f0
    if estimate_id == "E2.3":
        return np.sqrt(series.spacetime / (1.0 + t)), data0 + f0
    if estimate_id == "E2.4":
        ann = np.sqrt(np.maximum(series.ann_inv_r, 0.0))
        J = ann.shape[1]
        jmax = np.floor(np.log2(np.maximum(t, 1e-300))).astype(int)
        lhs = np.zeros_like(t)
        for j in range(J):
            use = jmax >= j
            lhs[use] = np.maximum(lhs[use], ann[use, j])
        return lhs, data0 + f0
    if estimate_id == "E2.5":
        return np.sqrt(series.ball_u), data0 + f0
    alphas = [a for a in series.alphas if sum(a) <= N]
    lhs = np.zeros_like(t)
    for a in alphas:
        lhs += np.sqrt(series.energy_sq[a]) + series.kss_normalized(a)
    if estimate_id == "E2.6":
        rhs = sum(math.sqrt(series.energy_sq[a][0]) for a in alphas) \
            + sum(series.force_int[a] for a in alphas)
        return lhs, rhs
    if estimate_id == "E4.3":
        rhs = sum(series.force_int[a] for a in alphas)
        lower = [a for a in alphas if sum(a) <= N - 1]
        if lower:
            now = sum(series.force_now[a] for a in lower)
            rhs = rhs + np.maximum.accumulate(now)
            rhs = rhs + sum(np.sqrt(series.force_l2sq[a]) for a in lower)
        return lhs, rhs
    raise InvalidArgument(f"unknown estimate id {estimate_id!r}")


def report(estimate_id, scenario, series, N=0, per_decade=32):
    """RatioReport on 32-per-decade log-spaced sample times."""
    T = float(series.t[-1])
    lhs, rhs = sides(estimate_id, series, N)
    if T <= 0:
        return RatioReport(estimate_id, scenario.describe(), np.array([0.0]),
                           lhs[:1], rhs[:1])
    ts = log_times(T, per_decade)
    idx = np.array([series.index_at(s) for s in ts])
    return RatioReport(estimate_id, scenario.describe(), series.t[idx], lhs[idx], rhs[idx],
                       extra={"seed": scenario.seed, "geometry": scenario.geometry.kind,
                              "N": N})


def verify_estimate(estimate_id, scenario, N=None):
    """Run the scenario and report both sides of the estimate."""
    check_admissible(estimate_id, scenario)
    if N is None:
        N = 1 if estimate_id in ("E2.6", "E4.3") else 0
    if estimate_id not in ("E2.6", "E4.3"):
        N_run = 0
    else:
        N_run = N
    series = run_scenario(scenario, N=N_run)
    return report(estimate_id, scenario, series, N_run)


def _battery_task(args):
    ids, scenario, N = args
    need_N = N if any(i in ("E2.6", "E4.3") for i in ids) else 0
    series = run_scenario(scenario, N=need_N)
    return [report(i, scenario, series, need_N if i in ("E2.6", "E4.3") else 0)
            for i in ids]


def run_battery(ids, seeds, T=1000.0, dr=0.1, N=1, threads=1):
    """Reports for every (id, seed); one run per scenario covers all its ids.

    Whole-space ids use Minkowski scenarios, E4.3 uses exterior-ball ones.
    Results are ordered by (id, seed) regardless of thread count.
    """
    for i in ids:
        if i not in ESTIMATE_IDS:
            raise InvalidArgument(f"unknown estimate id {i!r}")
    tasks = []
    mink = [i for i in ids if i != "E4.3"]
    for s in seeds:
        if mink:
            tasks.append((mink, random_scenario(s, Geometry.minkowski(), T, dr), N))
        if "E4.3" in ids:
            tasks.append((["E4.3"], random_scenario(s, Geometry.exterior_ball(), T, dr), N))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_battery_task, tasks))
    else:
        results = [_battery_task(t) for t in tasks]
    flat = [r for batch in results for r in batch]
    order = {i: k for k, i in enumerate(ESTIMATE_IDS)}
    flat.sort(key=lambda r: (order[r.estimate_id], r.extra["seed"]))
    return flat


def kss_log_fit(series, t_lo=1e2, t_hi=1e4, per_decade=32):
    """Fit the raw KSS accumulator against ln t on [t_lo, t_hi].

    Returns (slope, intercept, r_squared).  Linear growth in ln t shows that
    the ln(2+t)^(-1/2) normalization cannot be dropped.
    """
    ts = log_times(t_hi, per_decade, t_min=t_lo)
    idx = np.array([series.index_at(s) for s in ts])
    x = np.log(series.t[idx])
    y = series.kss[(0, 0)][idx]
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res**2)) / ss if ss > 0 else 0.0
    return float(slope), float(icpt), r2
