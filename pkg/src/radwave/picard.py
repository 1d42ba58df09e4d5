"""Picard iteration for box u = Q(u') and its exterior-ball variant.

Each iterate is a linear solve whose source is read from the previous
iterate's RK4 stage states.  Feeding the stage states (rather than the step
states) makes the fixed point of the iteration coincide with the direct RK4
solve of the semilinear system, so convergence can be checked against it.

Outside the ball the iteration acts on w = u - u0, where u0 = eta(t)*u_loc
is the cut-off local solution; the commutator [box, eta] is carried as a
stage-explicit linear term.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, LocalExistenceFailure
from .linear import _step_count, rk4_window
from .model import DataProfile, check_memory, sample_data
from .norms import NormObserver
from .semilinear import nonlinear_source


# ---------------------------------------------------------------------------
# Cutoff


@dataclass(frozen=True)
class CutoffProfile:
    """eta(t) = 1 for t <= a, 0 for t >= b, degree-7 smootherstep between.

    The transition s -> 1 - (35 s^4 - 84 s^5 + 70 s^6 - 20 s^7) has three
    vanishing derivatives at both ends, so eta is C^3 and eta', eta'' are
    exact polynomials supported in [a, b].
    """

    a: float = 0.5
    b: float = 1.0

    def __post_init__(self):
        if not 0 <= self.a < self.b:
            raise InvalidArgument("cutoff needs 0 <= a < b")

    def _s(self, t):
        return np.clip((np.asarray(t, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def eta(self, t):
        s = self._s(t)
        return 1.0 - s**4 * (35 - 84 * s + 70 * s**2 - 20 * s**3)

    def eta1(self, t):
        s = self._s(t)
        return -140 * s**3 * (1 - s) ** 3 / (self.b - self.a)

    def eta2(self, t):
        s = self._s(t)
        return -420 * s**2 * (1 - s) ** 2 * (1 - 2 * s) / (self.b - self.a) ** 2

    def __call__(self, t):
        return self.eta(t)


# ---------------------------------------------------------------------------
# Iterates


@dataclass
class Iterate:
    """One iterate on a fixed step sequence.

    V, P: reduced step states, shape (nt+1, n+1).
    SV, SP: RK4 stage states, shape (nt, 4, n+1).
    """

    grid: object
    times: np.ndarray
    dt: float
    V: np.ndarray
    P: np.ndarray
    SV: np.ndarray
    SP: np.ndarray

    @property
    def n_steps(self):
        return len(self.times) - 1

    def same_steps(self, other):
        return (other.grid is self.grid or other.grid == self.grid) and \
            other.n_steps == self.n_steps and abs(other.dt - self.dt) <= 1e-14 * self.dt


def _alloc(grid, nt):
    n1 = grid.size
    check_memory(8 * (2 * (nt + 1) * n1 + 8 * nt * n1), f"iterate of {nt} steps")
    return (np.zeros((nt + 1, n1)), np.zeros((nt + 1, n1)),
            np.zeros((nt, 4, n1)), np.zeros((nt, 4, n1)))


def march(grid, v0, p0, T, source):
    """RK4 over the whole grid recording steps and stage states.

    ``source(k, s, t, v, p)`` returns the reduced source for the stage state.
    """
    nt, dt = _step_count(T, grid.dt)
    V, P, SV, SP = _alloc(grid, nt)
    v = np.array(v0, dtype=float)
    p = np.array(p0, dtype=float)
    V[0], P[0] = v, p
    n1 = grid.size
    inv_dr2 = 1.0 / grid.dr**2

    def recorder(k, s, t, vs, ps, lo, hi):
        SV[k, s] = vs
        SP[k, s] = ps
        return source(k, s, t, vs, ps)

    t = 0.0
    for k in range(nt):
        # overflow is caught by the finiteness check below
        with np.errstate(over="ignore", invalid="ignore"):
            rk4_window(v, p, t, dt, 0, n1, k, inv_dr2, recorder)
        t = (k + 1) * dt if k + 1 < nt else T
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(p))):
            raise LocalExistenceFailure(f"iterate became non-finite at t={t:.6g}")
        V[k + 1], P[k + 1] = v, p
    times = np.arange(nt + 1) * dt
    times[-1] = T
    return Iterate(grid, times, dt, V, P, SV, SP)


def _series(grid, V, P, dt, N):
    obs = NormObserver(grid, N=N, ball_radii=(1.0,), local_radii=(), annuli=False)
    n1 = grid.size
    obs.start(0.0, V[0], P[0], 0, n1, dt)
    for i in range(1, len(V)):
        obs.push(i * dt, V[i], P[i], 0, n1)
    return obs.finish()


def m_norm(grid, V, P, dt, N=0):
    """sup_t sum_a (||Z^a u'(t)|| + ln(2+t)^(-1/2) KSS_a(t)); KSS over [0, t]."""
    return float(np.max(_series(grid, V, P, dt, N).z_sum()))


def _rq(grid, form):
    nl = nonlinear_source(grid, form)
    n1 = grid.size
    return lambda v, p: nl(0, 0, 0.0, v, p, 0, n1)


def picard_step_minkowski(prev, data, form, T, grid):
    """u_k from box u_k = Q(u'_{k-1}) with the original data.

    ``prev`` is the previous Iterate or None for u_{-1} = 0.
    """
    if grid.geometry.is_exterior:
        raise InvalidArgument("use picard_step_obstacle outside the ball")
    nt, dt = _step_count(T, grid.dt)
    if prev is not None and (prev.grid != grid or prev.n_steps != nt):
        raise InvalidArgument("previous iterate lives on a different grid or step sequence")
    v0, p0 = sample_data(data, grid)
    if prev is None or form.is_zero:
        src = lambda k, s, t, v, p: None
    else:
        rq = _rq(grid, form)
        src = lambda k, s, t, v, p: rq(prev.SV[k, s], prev.SP[k, s])
    return march(grid, v0, p0, T, src)


# ---------------------------------------------------------------------------
# Exterior ball


@dataclass
class LocalSolution:
    """u0 = eta * u_loc on [0, b], with stage and step values.

    ``V0, P0`` are step states of u0 (zero beyond the cutoff); ``SV0, SP0``
    its stage states for steps with t < b; ``constant`` is
    sup_{t <= b} ||u_loc'|| / eps.
    """

    grid: object
    cutoff: CutoffProfile
    dt: float
    V0: np.ndarray
    P0: np.ndarray
    SV0: np.ndarray
    SP0: np.ndarray
    constant: float
    sup_norm: float


def local_solve_and_cutoff(data, form, grid, T, cutoff=None, blowup_factor=1e3):
    """Direct semilinear solve on [0, b] multiplied by eta(t).

    Raises LocalExistenceFailure when the solution blows up (non-finite or
    energy grown by ``blowup_factor``) before t = b.
    """
    if not grid.geometry.is_exterior:
        raise InvalidArgument("the cutoff construction is for the exterior ball")
    cutoff = cutoff or CutoffProfile()
    nt, dt = _step_count(T, grid.dt)
    k1 = min(nt, int(math.ceil(cutoff.b / dt - 1e-9)))
    n1 = grid.size
    V0 = np.zeros((nt + 1, n1))
    P0 = np.zeros((nt + 1, n1))
    v0, p0 = sample_data(data, grid)
    e0 = _energy(v0, p0, grid)
    if data.is_zero or e0 == 0:
        z = np.zeros((k1, 4, n1))
        return LocalSolution(grid, cutoff, dt, V0, P0, z, z.copy(), 0.0, 0.0)
    rq = _rq(grid, form)
    T1 = k1 * dt
    try:
        loc = march(_SubGrid(grid, dt), v0, p0, T1, lambda k, s, t, v, p: rq(v, p))
    except LocalExistenceFailure as exc:
        raise LocalExistenceFailure(f"local solution failed before t={cutoff.b:g}: {exc}")
    sup = 0.0
    for i in range(k1 + 1):
        e = _energy(loc.V[i], loc.P[i], grid)
        if e > blowup_factor * e0:
            raise LocalExistenceFailure(
                f"local solution grew by more than {blowup_factor:g} before t={cutoff.b:g}")
        sup = max(sup, e)
    ts = np.arange(k1 + 1) * dt
    eta, eta1 = cutoff.eta(ts), cutoff.eta1(ts)
    V0[: k1 + 1] = eta[:, None] * loc.V
    P0[: k1 + 1] = eta1[:, None] * loc.V + eta[:, None] * loc.P
    st = ts[:-1, None] + dt * np.array([0.0, 0.5, 0.5, 1.0])[None, :]
    se, se1 = cutoff.eta(st), cutoff.eta1(st)
    SV0 = se[:, :, None] * loc.SV
    SP0 = se1[:, :, None] * loc.SV + se[:, :, None] * loc.SP
    return LocalSolution(grid, cutoff, dt, V0, P0, SV0, SP0, sup / data.eps, sup)


class _SubGrid:
    """Grid view with a prescribed time step (so a short solve shares steps)."""

    def __init__(self, grid, dt):
        self._grid = grid
        self.dt = dt

    def __getattr__(self, name):
        return getattr(self._grid, name)


def _energy(v, p, grid):
    from .norms import energy
    return energy(v, p, grid)


def picard_step_obstacle(prev_w, u0, form, T, grid):
    """w_k from box w_k = (1-eta) Q((u0+w_{k-1})') - [box, eta](u0 + w_k).

    Zero data, Dirichlet at R0.  In reduced form r[box, eta]phi =
    eta''*V + 2*eta'*P, with the w_k part taken from the current stage.
    """
    if not grid.geometry.is_exterior:
        raise InvalidArgument("picard_step_obstacle needs the exterior-ball geometry")
    nt, dt = _step_count(T, grid.dt)
    if abs(u0.dt - dt) > 1e-14 * dt or u0.V0.shape[0] != nt + 1:
        raise InvalidArgument("local solution uses a different step sequence")
    if prev_w is not None and (prev_w.grid != grid or prev_w.n_steps != nt):
        raise InvalidArgument("previous iterate lives on a different grid or step sequence")
    rq = _rq(grid, form)
    cut = u0.cutoff
    k1 = u0.SV0.shape[0]
    n1 = grid.size
    zero = np.zeros(n1)

    def src(k, s, t, v, p):
        if k < k1:
            sv0, sp0 = u0.SV0[k, s], u0.SP0[k, s]
        else:
            sv0 = sp0 = zero
        if prev_w is not None:
            sv, sp = sv0 + prev_w.SV[k, s], sp0 + prev_w.SP[k, s]
        else:
            sv, sp = sv0, sp0
        e = float(cut.eta(t))
        out = (1.0 - e) * rq(sv, sp) if not form.is_zero else np.zeros(n1)
        if k < k1:
            e1, e2 = float(cut.eta1(t)), float(cut.eta2(t))
            if e1 != 0.0 or e2 != 0.0:
                out = out - e2 * (sv0 + v) - 2.0 * e1 * (sp0 + p)
                out[0] = 0.0
                out[-1] = 0.0
        return out

    return march(grid, zero, zero, T, src)


def equation_residual(V, P, grid, form, dt, t_range, r_range):
    """max |(V_tt - V_rr)/r - Q(u')| over step levels and nodes in the ranges.

    Centered second differences in t and r; u_t = V_t/r, u_r = (V_r - V/r)/r.
    """
    times = np.arange(len(V)) * dt
    i_lo = max(1, int(math.ceil(t_range[0] / dt - 1e-9)))
    i_hi = min(len(V) - 2, int(math.floor(t_range[1] / dt + 1e-9)))
    r = grid.r
    j_lo = max(1, grid.index_of(r_range[0]))
    j_hi = min(grid.size - 2, grid.index_of(r_range[1]))
    if i_hi < i_lo or j_hi < j_lo:
        raise InvalidArgument("empty residual window")
    dr = grid.dr
    rr = r[j_lo:j_hi + 1]
    worst = 0.0
    for i in range(i_lo, i_hi + 1):
        c = V[i, j_lo:j_hi + 1]
        vtt = (V[i + 1, j_lo:j_hi + 1] - 2 * c + V[i - 1, j_lo:j_hi + 1]) / dt**2
        vrr = (V[i, j_lo + 1:j_hi + 2] - 2 * c + V[i, j_lo - 1:j_hi]) / dr**2
        vt = (V[i + 1, j_lo:j_hi + 1] - V[i - 1, j_lo:j_hi + 1]) / (2 * dt)
        vr = (V[i, j_lo + 1:j_hi + 2] - V[i, j_lo - 1:j_hi]) / (2 * dr)
        ut = vt / rr
        ur = (vr - c / rr) / rr
        res = (vtt - vrr) / rr - form(ut, ur)
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


# ---------------------------------------------------------------------------
# Driver


@dataclass
class PicardReport:
    """Per-iterate M_k, A_k and flags for one (eps, T) configuration."""

    eps: float
    T: float
    geometry: str
    M: list = field(default_factory=list)
    A: list = field(default_factory=list)
    C0_hat: float = 0.0
    C_kss: float = 0.0
    gate_value: float = 0.0
    tol_abs: float = 0.0
    converged: bool = False
    diverged: bool = False
    local_constant: float = None
    final: object = None
    final_u: tuple = None

    @property
    def K(self):
        return len(self.M)

    @property
    def gate_ok(self):
        return self.gate_value < 1.0

    @property
    def ratios(self):
        return [self.A[k] / self.A[k - 1] if self.A[k - 1] > 0 else 0.0
                for k in range(1, len(self.A))]

    @property
    def bounded(self):
        lim = 2.0 * self.C0_hat * self.eps
        return [m <= lim * (1 + 1e-12) for m in self.M]

    @property
    def contracting(self):
        return [True] + [r <= 0.5 for r in self.ratios]

    def rows(self):
        """(k, M_k, A_k, ratio, bounded, contracting) per iterate."""
        ratios = [math.nan] + self.ratios
        return [(k, self.M[k], self.A[k], ratios[k], int(self.bounded[k]),
                 int(self.contracting[k])) for k in range(self.K)]


@dataclass(frozen=True)
class PicardConfig:
    """Settings for run_picard."""

    data: DataProfile
    form: object
    T: float = 50.0
    K_max: int = 30
    tol_abs: float = 1e-10
    N: int = 0
    cutoff: CutoffProfile = CutoffProfile()
    kss_constant: float = None


def _kss_constant(grid, it):
    """sup_t ln(2+t)^(-1/2) KSS(t) / sup_t ||u'(t)|| for the first iterate.

    For the free wave this is the E2.1 ratio, energy being conserved.
    """
    s = _series(grid, it.V, it.P, it.dt, 0)
    e = math.sqrt(float(np.max(s.energy_sq[(0, 0)])))
    return float(np.max(s.kss_normalized())) / e if e > 0 else 0.0


def run_picard(config, grid):
    """Iterate until A_k <= tol_abs, K_max, or divergence.

    Divergence is A_k increasing three times in a row; it ends the run with
    ``diverged`` set rather than raising.  C0_hat = M_0/eps and the gate
    4*C_kss*C0_hat*eps*ln(2+T) < 1 is recorded (C_kss from the first
    iterate unless configured).
    """
    data, form, T = config.data, config.form, config.T
    eps = data.eps
    rep = PicardReport(eps=eps, T=T, geometry=grid.geometry.kind, tol_abs=config.tol_abs)
    exterior = grid.geometry.is_exterior
    u0 = None
    if exterior:
        u0 = local_solve_and_cutoff(data, form, grid, T, config.cutoff)
        rep.local_constant = u0.constant
        step = lambda prev: picard_step_obstacle(prev, u0, form, T, grid)
    else:
        step = lambda prev: picard_step_minkowski(prev, data, form, T, grid)
    prev = None
    rises = 0
    for k in range(config.K_max):
        cur = step(prev)
        M = m_norm(grid, cur.V, cur.P, cur.dt, config.N)
        if prev is None:
            A = M
        else:
            A = m_norm(grid, cur.V - prev.V, cur.P - prev.P, cur.dt, config.N)
        rep.M.append(M)
        rep.A.append(A)
        if k == 0:
            rep.C0_hat = M / eps if eps > 0 else 0.0
            if config.kss_constant is not None:
                rep.C_kss = config.kss_constant
            else:
                rep.C_kss = _kss_constant(grid, cur)
            rep.gate_value = 4 * rep.C_kss * rep.C0_hat * eps * math.log(2 + T)
        prev = cur
        if A <= config.tol_abs:
            rep.converged = True
            break
        if k >= 1 and A > rep.A[k - 1]:
            rises += 1
            if rises >= 3:
                rep.diverged = True
                break
        else:
            rises = 0
    rep.final = prev
    if exterior:
        rep.final_u = (u0.V0 + prev.V, u0.P0 + prev.P)
    else:
        rep.final_u = (prev.V, prev.P)
    return rep
