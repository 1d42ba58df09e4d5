"""Reduced linear wave solver v_tt - v_rr = F with a Dirichlet inner node.

Method of lines: centered second differences in r, classical RK4 in time on
the first-order system (v, p), p = v_t.  Integration is restricted to an
active window of nodes that can carry a nonzero field.  The window's right
edge follows the unit-speed front plus a safety margin.  An optional left
edge trails the light cone for runs where the field behind the front is
known to vanish or not to matter.
"""

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as sci_integrate

from .errors import IntegrationFailure, InvalidArgument, InvalidSequence
from .model import check_memory

# Nodes kept ahead of the unit-speed front.  The RK4 stencil reaches four
# nodes per step, but amplitudes leaking ahead of the front decay factorially.
WINDOW_MARGIN = 48

RK4_STAGE_OFFSETS = (0.0, 0.5, 0.5, 1.0)


# ---------------------------------------------------------------------------
# Forcing


@dataclass(frozen=True)
class ForcingField:
    """Separable source G(t, r) = amplitude * tau(t) * rho(r).

    ``time_profile`` and ``space_profile`` are model profiles; the reduced
    source entering the v equation is r*G.
    """

    amplitude: float
    time_profile: object
    space_profile: object

    @property
    def t_support(self):
        return self.time_profile.support

    @property
    def r_support(self):
        return self.space_profile.support

    @property
    def t_stop(self):
        return self.t_support[1]

    def value(self, t, r):
        return self.amplitude * float(self.time_profile(t)) * self.space_profile(r)

    def reduced(self, t, r):
        return np.asarray(r) * self.value(t, r)

    def derivative(self, t, r, j=0, m=0):
        """d^j/dt^j d^m/dr^m G at (t, r)."""
        tau = float(self.time_profile.derivative(t, j))
        return self.amplitude * tau * self.space_profile.derivative(r, m)

    def spatial_norm(self, m, R0):
        """L2(|x| > R0) norm of the m-th radial derivative of rho."""
        key = (m, float(R0))
        cache = self.__dict__.setdefault("_norm_cache", {})
        if key not in cache:
            lo, hi = self.r_support
            lo = max(lo, R0)
            if hi <= lo:
                cache[key] = 0.0
            else:
                f = lambda r: self.space_profile.derivative(r, m) ** 2 * r * r
                pts = np.linspace(lo, hi, 65)
                total = 0.0
                for a, b in zip(pts[:-1], pts[1:]):
                    total += sci_integrate.quad(f, a, b, epsabs=0, epsrel=1e-12, limit=200)[0]
                cache[key] = math.sqrt(4 * math.pi * total)
        return cache[key]

    def norm(self, t, R0=0.0, j=0, m=0):
        """||d_t^j d_r^m G(t, .)||_2 over |x| > R0."""
        tau = float(self.time_profile.derivative(t, j))
        return abs(self.amplitude * tau) * self.spatial_norm(m, R0)

    def describe(self):
        return (f"G={self.amplitude!r}*tau[{self.time_profile.spec()}]"
                f"*rho[{self.space_profile.spec()}]")


class StageForcing:
    """Reduced source tabulated per RK4 stage on a fixed step sequence.

    ``values[k, s]`` is the reduced source for stage s of step k on the full
    grid.  Used by the iteration schemes, which feed one iterate's stage
    forcing into the next linear solve.
    """

    def __init__(self, values, dt):
        self.values = values
        self.dt = dt

    def __call__(self, k, s, t, v, p, lo, hi):
        return self.values[k, s, lo:hi]


# ---------------------------------------------------------------------------
# Trajectory


@dataclass
class Trajectory:
    """Space-time record of the reduced state.

    ``v`` and ``p`` hold the states at ``times`` (every ``stride`` steps).
    ``ring`` keeps the last three full states for time differences.
    """

    grid: object
    times: np.ndarray
    v: np.ndarray
    p: np.ndarray
    dt: float
    stride: int
    n_steps: int
    blowup: tuple = None
    ring: list = field(default_factory=list)
    final_v: np.ndarray = None
    final_p: np.ndarray = None

    @property
    def t_final(self):
        return float(self.times[-1]) if len(self.times) else 0.0

    def state_at(self, i):
        return self.v[i], self.p[i]


def _step_count(T, dt_nominal):
    nt = max(1, math.ceil(T / dt_nominal - 1e-9))
    return nt, T / nt


class _Window:
    """Active node range [lo, hi) as a function of time."""

    def __init__(self, grid, front, lag):
        self.grid = grid
        self.front = front
        self.lag = lag
        self.lo = 0
        self.cap = grid.n - 1  # last two nodes never updated

    def bounds(self, t):
        g = self.grid
        # the discrete precursor ahead of the light cone widens like (t/dr)^(1/3)
        margin = WINDOW_MARGIN + math.ceil(8.0 * (t / g.dr) ** (1.0 / 3.0))
        hi = math.ceil((self.front + t - g.R0) / g.dr) + margin
        hi = min(self.cap, max(hi, 3))
        lo = self.lo
        if self.lag is not None:
            cand = math.floor((t - self.lag) / g.dr)
            lo = max(lo, min(cand, hi - 3))
        return lo, hi


def _accel(v, p, src, inv_dr2):
    a = np.empty_like(v)
    a[0] = 0.0
    a[-1] = 0.0
    mid = a[1:-1]
    np.add(v[2:], v[:-2], out=mid)
    mid -= 2.0 * v[1:-1]
    mid *= inv_dr2
    if src is not None:
        mid += src[1:-1]
    dv = p.copy()
    dv[0] = 0.0
    dv[-1] = 0.0
    return dv, a


def rk4_window(v, p, t, h, lo, hi, k, inv_dr2, source=None):
    """One RK4 step on nodes [lo, hi), edges frozen.  Updates v, p in place."""
    vw = v[lo:hi]
    pw = p[lo:hi]

    def src(s, vs, ps):
        if source is None:
            return None
        return source(k, s, t + RK4_STAGE_OFFSETS[s] * h, vs, ps, lo, hi)

    k1v, k1p = _accel(vw, pw, src(0, vw, pw), inv_dr2)
    v2 = vw + 0.5 * h * k1v
    p2 = pw + 0.5 * h * k1p
    k2v, k2p = _accel(v2, p2, src(1, v2, p2), inv_dr2)
    v3 = vw + 0.5 * h * k2v
    p3 = pw + 0.5 * h * k2p
    k3v, k3p = _accel(v3, p3, src(2, v3, p3), inv_dr2)
    v4 = vw + h * k3v
    p4 = pw + h * k3p
    k4v, k4p = _accel(v4, p4, src(3, v4, p4), inv_dr2)
    c = h / 6.0
    vw += c * (k1v + 2.0 * (k2v + k3v) + k4v)
    pw += c * (k1p + 2.0 * (k2p + k3p) + k4p)


def step_linear(v, p, t, dt, grid, forcing=None, lo=0, hi=None):
    """Advance (v, p) by dt; returns new arrays.

    ``forcing`` is a ForcingField, a callable ``(k, stage, t, v, p, lo, hi)``
    returning the reduced source on the window, or None.
    """
    if dt > grid.dr:
        raise InvalidArgument("CFL violated: dt > dr")
    v = np.array(v, dtype=float)
    p = np.array(p, dtype=float)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(p))):
        bad = int(np.flatnonzero(~(np.isfinite(v) & np.isfinite(p)))[0])
        raise IntegrationFailure("non-finite state", t=t, node=bad)
    hi = len(v) if hi is None else hi
    source = _as_source(forcing, grid)
    rk4_window(v, p, t, dt, lo, hi, 0, 1.0 / grid.dr**2, source)
    _check_finite(v, p, lo, hi, t + dt, grid)
    return v, p


def _as_source(forcing, grid):
    if forcing is None:
        return None
    if isinstance(forcing, ForcingField):
        r = grid.r
        lo_t, hi_t = forcing.t_support

        def source(k, s, t, v, p, lo, hi):
            if t <= lo_t or t >= hi_t:
                return None
            return forcing.reduced(t, r[lo:hi])

        return source
    return forcing


def _check_finite(v, p, lo, hi, t, grid):
    vw = v[lo:hi]
    pw = p[lo:hi]
    if math.isfinite(float(np.sum(np.abs(vw))) + float(np.sum(np.abs(pw)))):
        return True
    bad = np.flatnonzero(~(np.isfinite(vw) & np.isfinite(pw)))
    node = int(bad[0]) + lo if len(bad) else None
    raise IntegrationFailure(f"non-finite state at t={t:.6g}", t=t, node=node)


def integrate(grid, v0, p0, T, source=None, observer=None, stride=None,
              lag=None, front=None, monitor=None, on_nonfinite="raise"):
    """Integrate the reduced system from t = 0 to T.

    source: ForcingField, stage callable or None.
    observer: object with ``start(t, v, p, lo, hi, dt)``, ``push(t, v, p, lo,
        hi)`` and ``finish()``; sees every step at full rate.
    stride: store every stride-th state (None stores nothing but the ring).
    lag: nodes with r < R0 + t - lag are zeroed and excluded from updates.
    front: radius beyond which the initial state and source vanish.
    monitor: callable ``(k, t, v, p, lo, hi)`` returning a reason string to
        stop, or None.
    on_nonfinite: "raise" or "flag".
    Returns (Trajectory, stop) where stop is None or (t, reason).
    """
    if T > grid.t_end + 1e-9:
        raise InvalidArgument(f"T = {T:g} exceeds the grid horizon {grid.t_end:g}")
    if not T > 0:
        raise InvalidArgument("T must be positive")
    nt, dt = _step_count(T, grid.dt)
    v = np.array(v0, dtype=float)
    p = np.array(p0, dtype=float)
    if v.shape != (grid.size,) or p.shape != (grid.size,):
        raise InvalidArgument("state length does not match the grid")
    if front is None:
        nz = np.flatnonzero((v != 0) | (p != 0))
        front = grid.r[nz[-1]] if len(nz) else grid.R0
        if isinstance(source, ForcingField):
            front = max(front, source.r_support[1])
    src = _as_source(source, grid)
    win = _Window(grid, front, lag)

    store = stride is not None and stride > 0
    if store:
        n_store = nt // stride + 1 + (1 if nt % stride else 0)
        check_memory(2 * 8 * n_store * grid.size, f"trajectory of {n_store} states")
        V = np.zeros((n_store, grid.size))
        P = np.zeros((n_store, grid.size))
        times = np.zeros(n_store)
        V[0], P[0] = v, p
        n_saved = 1
    ring = deque(maxlen=3)
    ring.append((0.0, 0, v.copy(), p.copy()))

    lo, hi = win.bounds(0.0)
    if observer is not None:
        observer.start(0.0, v, p, 0, hi, dt)
    inv_dr2 = 1.0 / grid.dr**2
    stop = None
    t = 0.0
    k_done = 0
    for k in range(nt):
        lo_prev = win.lo
        lo, hi = win.bounds(t)
        if lo > lo_prev:
            v[lo_prev:lo] = 0.0
            p[lo_prev:lo] = 0.0
            win.lo = lo
        rk4_window(v, p, t, dt, lo, hi, k, inv_dr2, src)
        t = (k + 1) * dt if k + 1 < nt else T
        k_done = k + 1
        try:
            _check_finite(v, p, lo, hi, t, grid)
        except IntegrationFailure:
            if on_nonfinite == "raise":
                raise
            stop = (t, "nonfinite")
        if stop is None and monitor is not None:
            reason = monitor(k, t, v, p, lo, hi)
            if reason:
                stop = (t, reason)
        ring.append((t, lo, v[lo:hi].copy(), p[lo:hi].copy()))
        if observer is not None and (stop is None or stop[1] != "nonfinite"):
            observer.push(t, v, p, lo, hi)
        if store and (k_done % stride == 0 or k_done == nt or stop is not None):
            V[n_saved], P[n_saved] = v, p
            times[n_saved] = t
            n_saved += 1
        if stop is not None:
            break
    if observer is not None:
        observer.finish()
    if store:
        V, P, times = V[:n_saved], P[:n_saved], times[:n_saved]
    else:
        V = P = None
        times = np.array([t])
    full_ring = []
    for (tr, lr, vr, pr) in ring:
        fv = np.zeros(grid.size)
        fp = np.zeros(grid.size)
        fv[lr:lr + len(vr)] = vr
        fp[lr:lr + len(pr)] = pr
        full_ring.append((tr, fv, fp))
    traj = Trajectory(grid=grid, times=times, v=V, p=P, dt=dt,
                      stride=stride or 0, n_steps=k_done, blowup=stop,
                      ring=full_ring, final_v=v, final_p=p)
    return traj, stop


def solve_linear(grid, data, forcing=None, T=None, stride=1, observer=None,
                 lag=None, v0=None, p0=None):
    """Solve the reduced linear problem with data (DataProfile) and forcing.

    Raises IntegrationFailure on non-finite values.
    """
    from .model import sample_data
    T = grid.t_end if T is None else T
    if v0 is None:
        v0, p0 = sample_data(data, grid)
    front = None
    if data is not None and not data.is_zero:
        front = data.support[1]
    if isinstance(forcing, ForcingField):
        front = max(front or grid.R0, forcing.r_support[1])
    traj, _ = integrate(grid, v0, p0, T, source=forcing, observer=observer,
                        stride=stride, lag=lag, front=front)
    return traj


# ---------------------------------------------------------------------------
# d'Alembert oracle


def _odd_ext(fn, x, R0, order):
    """Odd extension about R0 of a function known on x >= R0.

    ``fn(y, order)`` returns the order-th derivative at y >= R0.  The
    derivative of order j of the odd extension is (-1)^(j+1) fn(2R0 - x) for
    x < R0.
    """
    x = np.asarray(x, dtype=float)
    inside = x >= R0
    y = np.where(inside, x, 2 * R0 - x)
    val = fn(y, order)
    sign = -1.0 if order % 2 == 0 else 1.0
    return np.where(inside, val, sign * val)


def _data_fns(data):
    """Reduced data phi = r*eps*f and psi = p0 with derivatives."""
    eps = data.eps

    def phi(y, order):
        f = data.f_shape
        if f is None or eps == 0:
            return np.zeros_like(y)
        if order == 0:
            return eps * y * f(y)
        if order == 1:
            return eps * (f(y) + y * f.d1(y))
        if order == 2:
            return eps * (2 * f.d1(y) + y * f.d2(y))
        if order == 3:
            raise InvalidArgument("phi derivatives beyond order 2 are not provided")

    def psi(y, order):
        if eps == 0:
            return np.zeros_like(y)
        if data.outgoing:
            return -phi(y, order + 1)
        g = data.g_shape
        if g is None:
            return np.zeros_like(y)
        if order == 0:
            return eps * y * g(y)
        if order == 1:
            return eps * (g(y) + y * g.d1(y))
        raise InvalidArgument("psi derivatives beyond order 1 are not provided")

    return phi, psi


def dalembert_oracle(data, R0, t, r):
    """Exact reduced field v(t, r) for free data with Dirichlet at R0."""
    return dalembert_fields(data, R0, t, r)["v"]


def dalembert_fields(data, R0, t, r):
    """Exact v and its first and second space-time derivatives.

    Keys: v, vt, vr, vtt, vtr, vrr.  Second derivatives require profiles with
    closed-form second derivatives; v itself needs a closed-form
    antiderivative of the velocity profile.
    """
    r = np.asarray(r, dtype=float)
    phi, psi = _data_fns(data)
    a, b = r + t, r - t

    def Pt(x):
        x = np.asarray(x, dtype=float)
        inside = x >= R0
        y = np.where(inside, x, 2 * R0 - x)
        return data.p0_antiderivative(y)

    out = {}
    out["v"] = 0.5 * (_odd_ext(phi, a, R0, 0) + _odd_ext(phi, b, R0, 0))
    if not _velocity_zero(data):
        out["v"] = out["v"] + 0.5 * (Pt(a) - Pt(b))
    ph1a, ph1b = _odd_ext(phi, a, R0, 1), _odd_ext(phi, b, R0, 1)
    ps0a, ps0b = _odd_ext(psi, a, R0, 0), _odd_ext(psi, b, R0, 0)
    out["vt"] = 0.5 * (ph1a - ph1b) + 0.5 * (ps0a + ps0b)
    out["vr"] = 0.5 * (ph1a + ph1b) + 0.5 * (ps0a - ps0b)
    ph2a, ph2b = _odd_ext(phi, a, R0, 2), _odd_ext(phi, b, R0, 2)
    ps1a, ps1b = _odd_ext(psi, a, R0, 1), _odd_ext(psi, b, R0, 1)
    out["vtt"] = 0.5 * (ph2a + ph2b) + 0.5 * (ps1a - ps1b)
    out["vtr"] = 0.5 * (ph2a - ph2b) + 0.5 * (ps1a + ps1b)
    out["vrr"] = out["vtt"]
    return out


def _velocity_zero(data):
    return data.eps == 0 or (not data.outgoing and data.g_shape is None)


def oracle_u_prime(data, R0, t, r, dt_order=0):
    """Exact physical (u_t, u_r) or their time derivative at radii r > 0."""
    f = dalembert_fields(data, R0, t, r)
    r = np.asarray(r, dtype=float)
    if dt_order == 0:
        return f["vt"] / r, (f["vr"] - f["v"] / r) / r
    if dt_order == 1:
        return f["vtt"] / r, (f["vtr"] - f["vt"] / r) / r
    raise InvalidArgument("oracle time derivatives are provided up to order 1")
