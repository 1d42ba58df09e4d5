"""Direct integration of v_tt - v_rr = r*Q(u_t, u_r) with blow-up detection."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationFailure, InvalidArgument
from .linear import integrate, rk4_window
from .model import sample_data
from .norms import NormObserver

SUP = "sup"
RADIATION = "radiation"


def nonlinear_source(grid, form):
    """Stage source (k, s, t, v, p, lo, hi) -> r*Q(u') on the window.

    With u_t = p/r and u_r = q/r, q = v_r - v/r, the reduced source is
    r*Q = (a*p^2 + b*q^2 + c*p*q)/r.  Window edges get no source.
    """
    r_all = grid.r
    a, b, c = form.a, form.b, form.c
    half_inv_dr = 0.5 / grid.dr

    def source(k, s, t, v, p, lo, hi):
        out = np.zeros(hi - lo)
        rin = r_all[lo + 1:hi - 1]
        pm = p[1:-1]
        acc = a * pm * pm
        if b != 0 or c != 0:
            q = (v[2:] - v[:-2]) * half_inv_dr - v[1:-1] / rin
            if b != 0:
                acc = acc + b * q * q
            if c != 0:
                acc = acc + c * pm * q
        out[1:-1] = acc / rin
        return out

    return source


def monitor_value(v, p, grid, lo, hi, mode=SUP):
    """max over active nodes of |u_t| + |u_r|, or r*(|u_t| + |u_r|)."""
    vw = v[lo:hi]
    pw = p[lo:hi]
    r = grid.r[lo:hi]
    if hi - lo < 3:
        return 0.0
    dr = grid.dr
    q = np.empty_like(vw)
    q[1:-1] = (vw[2:] - vw[:-2]) / (2 * dr)
    q[0] = (-3 * vw[0] + 4 * vw[1] - vw[2]) / (2 * dr)
    q[-1] = (3 * vw[-1] - 4 * vw[-2] + vw[-3]) / (2 * dr)
    start = 0
    extra = 0.0
    if lo == 0 and not grid.geometry.is_exterior:
        # regularized origin value: u_t(0) = dp/dr(0), u_r(0) = 0
        if mode == SUP:
            extra = abs((4 * pw[1] - pw[2]) / (2 * dr))
        start = 1
    rr = r[start:]
    q = q[start:] - vw[start:] / rr
    if mode == RADIATION:
        vals = np.abs(pw[start:]) + np.abs(q)
    else:
        vals = (np.abs(pw[start:]) + np.abs(q)) / rr
    m = float(np.max(vals)) if len(vals) else 0.0
    return max(m, extra)


@dataclass
class RunOutcome:
    """Result of a semilinear run.

    blowup is None or (t_star, trigger) with trigger "threshold" or
    "nonfinite".  norm_log holds per-step time, energy and raw KSS value.
    """

    trajectory: object
    blowup: tuple
    norm_log: dict
    threshold: float
    initial_sup: float
    monitor: str = SUP
    series: object = None

    @property
    def t_star(self):
        return None if self.blowup is None else self.blowup[0]

    @property
    def survived(self):
        return self.blowup is None


def step_semilinear(v, p, t, dt, grid, form, lo=0, hi=None):
    """One RK4 step of the semilinear system.

    Returns (v, p, nonfinite) with new arrays; a non-finite stage value is
    flagged rather than raised.
    """
    if dt > grid.dr:
        raise InvalidArgument("CFL violated: dt > dr")
    v = np.array(v, dtype=float)
    p = np.array(p, dtype=float)
    hi = len(v) if hi is None else hi
    src = None if form.is_zero else nonlinear_source(grid, form)
    with np.errstate(over="ignore", invalid="ignore"):
        rk4_window(v, p, t, dt, lo, hi, 0, 1.0 / grid.dr**2, src)
    bad = not (np.all(np.isfinite(v)) and np.all(np.isfinite(p)))
    return v, p, bad


def run(grid, data, form, T, threshold=None, threshold_factor=1e4, monitor=SUP,
        stride=None, lag=None, observer=None, log_norms=True, v0=None, p0=None):
    """Integrate to T or to blow-up.

    Blow-up is declared when the monitored quantity (sup of |u_t| + |u_r|,
    or its r-weighted radiation-field version) first exceeds ``threshold``,
    or when the state turns non-finite.  ``threshold`` defaults to
    threshold_factor times the initial value and must exceed ten times it.
    """
    if monitor not in (SUP, RADIATION):
        raise InvalidArgument(f"unknown monitor {monitor!r}")
    if v0 is None:
        v0, p0 = sample_data(data, grid)
    hi0 = grid.size
    m0 = monitor_value(v0, p0, grid, 0, hi0, monitor)
    if threshold is None:
        threshold = threshold_factor * m0 if m0 > 0 else math.inf
    elif m0 > 0 and not threshold > 10 * m0:
        raise InvalidArgument(
            f"threshold {threshold:g} must exceed 10x the initial value {m0:g}")
    front = data.support[1] if data is not None and not data.is_zero else grid.R0
    src = None if form.is_zero else nonlinear_source(grid, form)

    def check(k, t, v, p, lo, hi):
        val = monitor_value(v, p, grid, lo, hi, monitor)
        if not math.isfinite(val):
            return "nonfinite"
        if val > threshold:
            return "threshold"
        return None

    obs = observer
    if obs is None and log_norms:
        obs = NormObserver(grid, N=0, ball_radii=(1.0,), local_radii=(), annuli=False)
    with np.errstate(over="ignore", invalid="ignore"):
        traj, stop = integrate(grid, v0, p0, T, source=src, observer=obs, stride=stride,
                               lag=lag, front=front, monitor=check if m0 > 0 else None,
                               on_nonfinite="flag")
    log = {}
    series = None
    if obs is not None and hasattr(obs, "series"):
        series = obs.series
        log = {"t": series.t, "energy": np.sqrt(series.energy_sq[(0, 0)]),
               "kss": series.kss[(0, 0)]}
    return RunOutcome(trajectory=traj, blowup=stop, norm_log=log, threshold=threshold,
                      initial_sup=m0, monitor=monitor, series=series)


def ode_blowup(y0, dt, threshold, t_max=None):
    """RK4 on y' = y^2 from y(0) = y0; first time y exceeds threshold.

    Returns None when y0 = 0 or no crossing happens before t_max.
    """
    if y0 == 0:
        return None
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    t_max = 10.0 / abs(y0) if t_max is None else t_max
    y = float(y0)
    t = 0.0
    f = lambda x: x * x
    while t < t_max:
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
        if not math.isfinite(y) or abs(y) > threshold:
            return t
    return None
