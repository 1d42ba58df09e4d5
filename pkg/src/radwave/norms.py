"""Norms of radial fields: energies, KSS space-time norms, dyadic pieces.

All norms are those of the physical 3D field u = v/r.  For radial u,
||u'(t)||^2 = 4*pi * int (u_t^2 + u_r^2) r^2 dr = 4*pi * int [p^2 + (v_r - v/r)^2] dr.
Quadrature is trapezoidal in r; time integrals use the left endpoint rule at
the full step rate.  Rotation fields vanish on radial functions, so the
derivative family Z reduces to d_t and d_r.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, InvalidSequence
from .model import radial_gradient

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class NormConfig:
    """Derivative order N <= 2 and the shifts in ln(2 + t) and (1 + r)."""

    N: int = 0
    dyadic_base: int = 2
    log_shift: float = 2.0
    weight_shift: float = 1.0

    def __post_init__(self):
        if self.N not in (0, 1, 2):
            raise InvalidArgument("derivative order N must be 0, 1 or 2")
        if self.dyadic_base != 2:
            raise InvalidArgument("only dyadic base 2 is supported")

    @property
    def alphas(self):
        return multi_indices(self.N)


def multi_indices(N):
    """(j, m) for d_t^j d_r^m with j + m <= N, ordered by total degree."""
    return [(j, s - j) for s in range(N + 1) for j in range(s, -1, -1)]


def trapezoid_weights(grid):
    w = np.full(grid.size, grid.dr)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def region_weights(grid, a, b):
    """Trapezoid node weights for the radial interval [a, b]."""
    r = grid.r
    tol = 1e-9 * grid.dr
    w = np.where((r > a + tol) & (r < b - tol), grid.dr, 0.0)
    w = np.where(np.abs(r - a) <= tol, 0.5 * grid.dr, w)
    w = np.where(np.abs(r - b) <= tol, 0.5 * grid.dr, w)
    return w


def reduced_gradient_term(v, grid, lo=0):
    """v_r - v/r on nodes lo..lo+len(v)-1 (equals r*u_r)."""
    r = grid.r[lo:lo + len(v)]
    vr = radial_gradient(v, grid.dr)
    out = np.empty_like(v)
    if lo == 0 and not grid.geometry.is_exterior:
        out[1:] = vr[1:] - v[1:] / r[1:]
        out[0] = 0.0
    else:
        out[:] = vr - v / r
    return out


def energy_density(v, p, grid, lo=0):
    """p^2 + (v_r - v/r)^2, so that ||u'||^2 = 4*pi * int density dr."""
    q = reduced_gradient_term(v, grid, lo)
    return p * p + q * q


def energy(v, p, grid):
    """||u'(t, .)||_2 by trapezoidal quadrature."""
    v = np.asarray(v, dtype=float)
    p = np.asarray(p, dtype=float)
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(p))):
        raise InvalidArgument("energy of a non-finite state")
    e = energy_density(v, p, grid)
    return math.sqrt(FOUR_PI * float(np.dot(trapezoid_weights(grid), e)))


def discrete_energy(v, p, grid):
    """Staggered energy 4*pi*(dr*sum p^2 + sum (dv)^2/dr).

    Equal to ||u'||^2 up to O(dr^2) and conserved by the semi-discrete
    scheme, so it measures the time integrator's drift alone.
    """
    v = np.asarray(v, dtype=float)
    p = np.asarray(p, dtype=float)
    dv = np.diff(v)
    return FOUR_PI * (grid.dr * float(np.dot(p, p)) + float(np.dot(dv, dv)) / grid.dr)


# ---------------------------------------------------------------------------
# KSS accumulator


@dataclass
class KssAccumulator:
    """Running int_0^t ||(1+r)^(-1/2) u'||^2 ds, left endpoint in time."""

    value: float = 0.0
    t: float = 0.0
    integrand: float = 0.0
    log_shift: float = 2.0

    @classmethod
    def start(cls, v, p, grid, t=0.0, weight_shift=1.0, log_shift=2.0):
        return cls(0.0, float(t), kss_integrand(v, p, grid, weight_shift), log_shift)

    @property
    def normalized(self):
        return self.value / math.log(self.log_shift + self.t)


def kss_integrand(v, p, grid, weight_shift=1.0):
    e = energy_density(np.asarray(v, float), np.asarray(p, float), grid)
    w = trapezoid_weights(grid) / (weight_shift + grid.r)
    return FOUR_PI * float(np.dot(w, e))


def kss_accumulate(acc, v, p, grid, t, dt, weight_shift=1.0):
    """Advance the accumulator to the state (v, p) at time t = acc.t + dt."""
    if not dt > 0:
        raise InvalidSequence("dt must be positive")
    if abs(acc.t + dt - t) > 1e-9 * max(1.0, abs(t)):
        raise InvalidSequence(f"accumulator at t={acc.t:g} cannot take a state at t={t:g} "
                              f"with dt={dt:g}")
    return KssAccumulator(acc.value + dt * acc.integrand, float(t),
                          kss_integrand(v, p, grid, weight_shift), acc.log_shift)


# ---------------------------------------------------------------------------
# Derivative fields


def time_derivatives(levels, i, dt, order):
    """order-th time difference of the stacked levels at position i.

    Central differences in the interior, one-sided second-order formulas at
    the ends.  ``levels`` is a sequence of equally spaced arrays.
    """
    n = len(levels)
    if order == 0:
        return levels[i]
    need = 3 if order == 1 else 4
    if n < need:
        raise InvalidSequence(f"order {order} time differences need {need} levels, have {n}")
    f = levels
    if order == 1:
        if 0 < i < n - 1:
            return (f[i + 1] - f[i - 1]) / (2 * dt)
        if i == 0:
            return (-3 * f[0] + 4 * f[1] - f[2]) / (2 * dt)
        return (3 * f[i] - 4 * f[i - 1] + f[i - 2]) / (2 * dt)
    if order == 2:
        if 0 < i < n - 1:
            return (f[i + 1] - 2 * f[i] + f[i - 1]) / dt**2
        if i == 0:
            return (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / dt**2
        return (2 * f[i] - 5 * f[i - 1] + 4 * f[i - 2] - f[i - 3]) / dt**2
    raise InvalidArgument("time differences are provided up to order 2")


def physical_prime(v, p, grid, lo=0):
    """(u_t, u_r) on nodes lo.. from a reduced pair (v, p)."""
    r = grid.r[lo:lo + len(v)]
    q = reduced_gradient_term(v, grid, lo)
    ut = np.empty_like(v)
    ur = np.empty_like(v)
    if grid.geometry.is_exterior or lo > 0:
        ut[:] = p / r
        ur[:] = q / r
    else:
        ut[1:] = p[1:] / r[1:]
        ur[1:] = q[1:] / r[1:]
        ut[0] = (4 * p[1] - p[2]) / (2 * grid.dr)
        ur[0] = 0.0
    return ut, ur


def alpha_density(vj, pj, grid, m, lo=0):
    """|d_r^m (u_t, u_r)|^2 r^2 for the time-differentiated pair (vj, pj)."""
    if m == 0:
        return energy_density(vj, pj, grid, lo)
    ut, ur = physical_prime(vj, pj, grid, lo)
    for _ in range(m):
        ut = radial_gradient(ut, grid.dr)
        ur = radial_gradient(ur, grid.dr)
    r = grid.r[lo:lo + len(vj)]
    return (ut * ut + ur * ur) * r * r


@dataclass
class DerivativeFields:
    """Z^alpha u' for |alpha| <= N on stored times.

    ``fields[(j, m)]`` is a pair (d_t^j d_r^m u_t, d_t^j d_r^m u_r) of arrays
    shaped (times, nodes).  Rotation derivatives vanish identically on radial
    fields; ``omega`` returns those exact zeros.
    """

    times: np.ndarray
    fields: dict
    radial: bool = True

    def omega(self, order=1):
        if order < 1:
            raise InvalidArgument("rotation derivatives start at order 1")
        shape = next(iter(self.fields.values()))[0].shape
        return np.zeros(shape), np.zeros(shape)


def derivative_fields(trajectory, N):
    """Mixed d_t^j d_r^m u' (j + m <= N) on the stored trajectory."""
    cfg = NormConfig(N=N)
    grid = trajectory.grid
    if trajectory.v is None:
        raise InvalidSequence("trajectory stores no states")
    V, P, times = trajectory.v, trajectory.p, trajectory.times
    nlev = len(times)
    if N >= 1 and nlev < (3 if N == 1 else 4):
        raise InvalidSequence(f"N={N} needs at least {3 if N == 1 else 4} stored levels")
    if nlev > 1:
        steps = np.diff(times)
        if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, steps[0]):
            raise InvalidSequence("stored times are not equally spaced")
        h = float(steps[0])
    else:
        h = 1.0
    out = {}
    for (j, m) in cfg.alphas:
        uts = np.zeros_like(V)
        urs = np.zeros_like(V)
        for i in range(nlev):
            vj = time_derivatives(V, i, h, j)
            pj = time_derivatives(P, i, h, j)
            ut, ur = physical_prime(vj, pj, grid)
            for _ in range(m):
                ut = radial_gradient(ut, grid.dr)
                ur = radial_gradient(ur, grid.dr)
            uts[i], urs[i] = ut, ur
        out[(j, m)] = (uts, urs)
    return DerivativeFields(times=np.array(times), fields=out)


# ---------------------------------------------------------------------------
# On-the-fly observer


@dataclass
class NormSeries:
    """Per-step norm series collected by NormObserver.

    Squared norms and cumulative space-time integrals, indexed by step:
      energy_sq[a]      ||Z^a u'(t)||^2
      kss[a]            int_0^t ||(1+r)^(-1/2) Z^a u'||^2
      spacetime         int_0^t ||u'||^2
      ball[R]           int_0^t ||u'||^2 over |x| < R
      ball_u            int_0^t ||u||^2 over |x| < 1
      local[R]          ||u'(t)||^2 over |x| < R
      ann_inv_r         int_0^t ||r^(-1/2) u'||^2 over |x| in [2^j, 2^(j+1)]
      ann_kss           same with the (1+r)^(-1) weight
      force_int[a]      int_0^t ||Z^a G||
      force_sup[a]      sup_{s<=t} ||Z^a G(s)||
      force_l2sq[a]     int_0^t ||Z^a G||^2
      force_now[a]      ||Z^a G(t)||
    """

    alphas: list
    t: np.ndarray
    energy_sq: dict
    kss: dict
    spacetime: np.ndarray
    ball: dict
    ball_u: np.ndarray
    local: dict
    ann_inv_r: np.ndarray
    ann_kss: np.ndarray
    force_int: dict
    force_sup: dict
    force_l2sq: dict
    force_now: dict = None
    log_shift: float = 2.0

    def index_at(self, t):
        """Index of the first step with time >= t (last step if beyond)."""
        i = int(np.searchsorted(self.t, t - 1e-12 * max(1.0, t)))
        return min(i, len(self.t) - 1)

    def kss_normalized(self, a=(0, 0)):
        return np.sqrt(self.kss[a] / np.log(self.log_shift + self.t))

    def z_sum(self):
        """sum_a (||Z^a u'(t)|| + ln(2+t)^(-1/2) ||(1+r)^(-1/2) Z^a u'||_{[0,t]})."""
        total = np.zeros_like(self.t)
        for a in self.alphas:
            total += np.sqrt(self.energy_sq[a]) + self.kss_normalized(a)
        return total


class NormObserver:
    """Collects NormSeries quantities at every step of an integration.

    With N >= 1 the time derivatives use a four-level ring, so levels are
    processed with a lag of one step and the last level at ``finish``.
    """

    def __init__(self, grid, N=0, ball_radii=(1.0, 2.0, 4.0), local_radii=(4.0,),
                 annuli=True, forcing=None, config=None):
        self.grid = grid
        self.cfg = config or NormConfig(N=N)
        self.N = self.cfg.N
        self.alphas = self.cfg.alphas
        self.forcing = forcing
        r = grid.r
        R0 = grid.R0
        w = trapezoid_weights(grid)
        self.w_all = w
        self.w_kss = w / (self.cfg.weight_shift + r)
        self.ball_radii = tuple(ball_radii)
        self.local_radii = tuple(local_radii)
        self.w_ball = {R: region_weights(grid, R0, R) for R in self.ball_radii}
        self.w_local = {R: region_weights(grid, R0, R) for R in self.local_radii}
        self.annuli = annuli
        if annuli:
            jmax = max(0, int(math.floor(math.log2(max(grid.r_max, 1.0)))))
            self.J = jmax + 1
            self._ann = []
            for j in range(self.J):
                wj = region_weights(grid, 2.0**j, 2.0 ** (j + 1))
                idx = np.flatnonzero(wj)
                if len(idx):
                    self._ann.append((j, idx, wj[idx]))
            safe_r = np.where(r > 0, r, 1.0)
            self.inv_r = 1.0 / safe_r
            self.inv_1r = 1.0 / (self.cfg.weight_shift + r)
        else:
            self.J = 0
        self._rows = []

    # integration hooks -------------------------------------------------
    def start(self, t, v, p, lo, hi, dt):
        self.dt = dt
        self._ring = []
        self._ring_t = []
        self._base = 0
        self._next = 0
        self._pushed = 0
        self._rows = []
        self.push(t, v, p, lo, hi)

    def push(self, t, v, p, lo, hi):
        if self.N == 0:
            self._process(t, {(0, 0): (v[lo:hi], p[lo:hi])}, lo, hi)
            return
        self._ring.append((v[lo:hi].copy(), p[lo:hi].copy(), lo, hi))
        self._ring_t.append(t)
        self._pushed += 1
        need = 3 if self.N == 1 else 4
        while True:
            L = self._next
            ready = (L == 0 and self._pushed >= need) or (L > 0 and L + 1 < self._pushed)
            if not ready:
                return
            self._process_level(L)

    def _process_level(self, L):
        pos = L - self._base
        ring = self._ring
        lo = min(x[2] for x in ring)
        hi = max(x[3] for x in ring)
        Vs = [self._pad(x[0], x[2] - lo, hi - lo) for x in ring]
        Ps = [self._pad(x[1], x[2] - lo, hi - lo) for x in ring]
        pairs = {}
        for (j, m) in self.alphas:
            pairs[(j, m)] = (time_derivatives(Vs, pos, self.dt, j),
                             time_derivatives(Ps, pos, self.dt, j))
        self._process(self._ring_t[pos], pairs, lo, hi)
        self._next += 1
        # the last four levels cover every remaining stencil
        while self._base < self._pushed - 4:
            self._ring.pop(0)
            self._ring_t.pop(0)
            self._base += 1

    @staticmethod
    def _pad(a, off, n):
        if off == 0 and len(a) == n:
            return a
        out = np.zeros(n)
        out[off:off + len(a)] = a
        return out

    def finish(self):
        if self.N >= 1:
            need = 3 if self.N == 1 else 4
            if self._pushed < need:
                raise InvalidSequence(f"N={self.N} needs at least {need} time levels")
            while self._next < self._pushed:
                self._process_level(self._next)
        self.series = self._build()
        return self.series

    # per-level quantities ----------------------------------------------
    def _process(self, t, pairs, lo, hi):
        """Norms of the level whose active nodes are lo..hi-1 (zero elsewhere)."""
        grid = self.grid
        row = {"t": t}
        v0, p0 = pairs[(0, 0)]
        dens0 = energy_density(v0, p0, grid, lo)
        for a in self.alphas:
            j, m = a
            if a == (0, 0):
                d = dens0
            else:
                vj, pj = pairs[(j, m)]
                d = alpha_density(vj, pj, grid, m, lo)
            row[("e", a)] = FOUR_PI * float(np.dot(self.w_all[lo:hi], d))
            row[("k", a)] = FOUR_PI * float(np.dot(self.w_kss[lo:hi], d))
        row["st"] = row[("e", (0, 0))]
        for R in self.ball_radii:
            row[("b", R)] = FOUR_PI * float(np.dot(self.w_ball[R][lo:hi], dens0))
        for R in self.local_radii:
            row[("l", R)] = FOUR_PI * float(np.dot(self.w_local[R][lo:hi], dens0))
        w1 = self.w_ball.get(1.0)
        if w1 is None:
            w1 = region_weights(grid, grid.R0, 1.0)
            self.w_ball[1.0] = w1
        row["bu"] = FOUR_PI * float(np.dot(w1[lo:hi], v0 * v0))
        if self.annuli:
            ai = np.zeros(self.J)
            ak = np.zeros(self.J)
            for (j, idx, wj) in self._ann:
                keep = (idx >= lo) & (idx < hi)
                if not np.any(keep):
                    continue
                sel = idx[keep]
                dj = dens0[sel - lo] * wj[keep]
                ai[j] = FOUR_PI * float(np.dot(dj, self.inv_r[sel]))
                ak[j] = FOUR_PI * float(np.dot(dj, self.inv_1r[sel]))
            row["ai"] = ai
            row["ak"] = ak
        if self.forcing is not None:
            for a in self.alphas:
                j, m = a
                row[("f", a)] = self.forcing.norm(t, grid.R0, j, m)
        self._rows.append(row)

    def _build(self):
        rows = self._rows
        n = len(rows)
        t = np.array([r["t"] for r in rows])
        dtk = np.diff(t)

        def cum(vals):
            out = np.zeros(n)
            if n > 1:
                out[1:] = np.cumsum(dtk * vals[:-1])
            return out

        def cum2(mat):
            out = np.zeros_like(mat)
            if n > 1:
                out[1:] = np.cumsum(dtk[:, None] * mat[:-1], axis=0)
            return out

        energy_sq = {a: np.array([r[("e", a)] for r in rows]) for a in self.alphas}
        kss = {a: cum(np.array([r[("k", a)] for r in rows])) for a in self.alphas}
        spacetime = cum(np.array([r["st"] for r in rows]))
        ball = {R: cum(np.array([r[("b", R)] for r in rows])) for R in self.ball_radii}
        ball_u = cum(np.array([r["bu"] for r in rows]))
        local = {R: np.array([r[("l", R)] for r in rows]) for R in self.local_radii}
        if self.annuli:
            ann_i = cum2(np.array([r["ai"] for r in rows]))
            ann_k = cum2(np.array([r["ak"] for r in rows]))
        else:
            ann_i = ann_k = np.zeros((n, 0))
        force_int, force_sup, force_l2, force_now = {}, {}, {}, {}
        for a in self.alphas:
            if self.forcing is not None:
                fa = np.array([r[("f", a)] for r in rows])
            else:
                fa = np.zeros(n)
            force_int[a] = cum(fa)
            force_sup[a] = np.maximum.accumulate(fa) if n else fa
            force_l2[a] = cum(fa * fa)
            force_now[a] = fa
        return NormSeries(self.alphas, t, energy_sq, kss, spacetime, ball, ball_u,
                          local, ann_i, ann_k, force_int, force_sup, force_l2,
                          force_now, self.cfg.log_shift)


def observe_trajectory(trajectory, N=0, forcing=None, **kw):
    """Replay a stored trajectory (stride 1) through a NormObserver."""
    if trajectory.v is None:
        raise InvalidSequence("trajectory stores no states")
    obs = NormObserver(trajectory.grid, N=N, forcing=forcing, **kw)
    times = trajectory.times
    dt = float(times[1] - times[0]) if len(times) > 1 else trajectory.dt
    hi = trajectory.grid.size
    obs.start(float(times[0]), trajectory.v[0], trajectory.p[0], 0, hi, dt)
    for i in range(1, len(times)):
        obs.push(float(times[i]), trajectory.v[i], trajectory.p[i], 0, hi)
    return obs.finish()


# ---------------------------------------------------------------------------
# Dyadic profile and weighted Sobolev check


def dyadic_profile(source, t):
    """Per-annulus ||r^(-1/2) u'|| over [0, t] x {2^j <= |x| <= 2^(j+1)}, 2^j <= t.

    ``source`` is a NormSeries or a stored Trajectory.  Returns a dict with
    the annulus values, their (1+r)^(-1) counterparts, the unit-ball term and
    the global (1+r)^(-1) norm.
    """
    series = source if isinstance(source, NormSeries) else observe_trajectory(source)
    k = series.index_at(t)
    jmax = int(math.floor(math.log2(t))) if t >= 1 else -1
    J = series.ann_inv_r.shape[1]
    jmax = min(jmax, J - 1)
    ann = np.sqrt(np.maximum(series.ann_inv_r[k, : jmax + 1], 0.0))
    ann_k = np.sqrt(np.maximum(series.ann_kss[k, : jmax + 1], 0.0))
    return {
        "R": 2.0 ** np.arange(jmax + 1),
        "annulus": ann,
        "annulus_kss": ann_k,
        "all_annuli_kss_sq": float(np.sum(series.ann_kss[k])),
        "unit_ball": math.sqrt(max(series.ball[1.0][k], 0.0)),
        "global_kss": math.sqrt(max(series.kss[(0, 0)][k], 0.0)),
        "t": float(series.t[k]),
    }


def annulus_sup_check(h, R, r=None, n_samples=4097):
    """Both sides of the annulus Sobolev bound for a radial function h.

    lhs = sup_{R/2 <= r <= R} |h|;
    rhs = R^-1 * sum_{j<=2} ||d_r^j h||_{L2(R/4 <= |x| <= 2R)}.
    ``h`` is a callable of r, or values sampled on the nodes ``r``.
    """
    if not R > 1:
        raise InvalidArgument("R must exceed 1")
    sup_vals = None
    if callable(h):
        r = np.linspace(R / 4, 2 * R, n_samples)
        vals = np.asarray(h(r), dtype=float)
        # the sup is taken on its own grid so both ends R/2 and R are sampled
        sup_vals = np.asarray(h(np.linspace(R / 2, R, n_samples)), dtype=float)
    else:
        if r is None:
            raise InvalidArgument("sampled h needs its radii")
        r = np.asarray(r, dtype=float)
        vals = np.asarray(h, dtype=float)
        sel = (r >= R / 4 - 1e-12) & (r <= 2 * R + 1e-12)
        r, vals = r[sel], vals[sel]
        if len(r) < 32:
            raise InvalidArgument("annulus sampling needs at least 32 nodes in [R/4, 2R]")
        if r[0] > R / 4 + 1e-9 * R or r[-1] < 2 * R - 1e-9 * R:
            raise InvalidArgument("samples do not cover [R/4, 2R]")
        steps = np.diff(r)
        if np.max(np.abs(steps - steps[0])) > 1e-6 * steps[0]:
            raise InvalidArgument("samples must be equally spaced")
    if len(r) < 32:
        raise InvalidArgument("annulus sampling needs at least 32 nodes in [R/4, 2R]")
    dr = r[1] - r[0]
    inner = (r >= R / 2 - 1e-12) & (r <= R + 1e-12)
    if sup_vals is None:
        sup_vals = vals[inner]
    lhs = float(np.max(np.abs(sup_vals))) if len(sup_vals) else 0.0
    w = np.full(len(r), dr)
    w[0] *= 0.5
    w[-1] *= 0.5
    total = 0.0
    d = vals
    for j in range(3):
        if j:
            d = np.gradient(d, dr, edge_order=2)
        total += math.sqrt(FOUR_PI * float(np.dot(w, d * d * r * r)))
    return lhs, total / R


# ---------------------------------------------------------------------------
# Ratio reports


@dataclass
class RatioReport:
    """Both sides of an inequality sampled in time."""

    estimate_id: str
    scenario: str
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    ratio: np.ndarray = None
    max_ratio: float = 0.0
    tail_slope: float = 0.0
    valid: bool = True
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        lhs = np.asarray(self.lhs, dtype=float)
        rhs = np.asarray(self.rhs, dtype=float)
        if np.any(lhs < 0) or np.any(rhs < 0):
            raise InvalidArgument("norm sides must be non-negative")
        self.ratio = safe_ratio(lhs, rhs)
        self.valid = bool(np.all(np.isfinite(self.ratio)))
        self.max_ratio = float(np.max(self.ratio)) if len(self.ratio) else 0.0
        T = float(self.times[-1]) if len(self.times) else 0.0
        self.tail_slope = tail_slope(self.times, self.ratio, T) if self.valid else math.inf


def safe_ratio(lhs, rhs):
    """lhs/rhs with 0/0 := 0 and x/0 := inf."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    out = np.zeros_like(lhs)
    pos = rhs > 0
    out[pos] = lhs[pos] / rhs[pos]
    out[(~pos) & (lhs > 0)] = math.inf
    return out


def log_times(T, per_decade=32, t_min=None):
    """Logarithmically spaced sample times in [t_min, T], always ending at T."""
    if t_min is None:
        t_min = min(1.0, T / 100.0)
    n = max(2, int(math.ceil(per_decade * math.log10(T / t_min))) + 1)
    ts = np.logspace(math.log10(t_min), math.log10(T), n)
    ts[-1] = T
    return ts


def tail_slope(times, values, T, decades=1.0):
    """Least-squares slope of values against ln t over [T/10^decades, T]."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    sel = (times >= T / 10**decades * (1 - 1e-12)) & (times > 0)
    if np.count_nonzero(sel) < 2:
        return 0.0
    x = np.log(times[sel])
    y = values[sel]
    if np.ptp(x) == 0:
        return 0.0
    return float(np.polyfit(x, y, 1)[0])
