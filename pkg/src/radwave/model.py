"""Geometry, grids, radial profiles and the quadratic nonlinearity.

Radial fields are carried in the reduced variable v = r*u.  For radial u the
3D wave operator becomes the 1+1D operator on v, and the nonlinearity
Q(u_t, u_r) enters the reduced equation multiplied by r.
"""

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import InvalidArgument, ResourceLimit, UnsupportedProfile

MINKOWSKI = "minkowski"
EXTERIOR_BALL = "exterior_ball"

MEMORY_ENV = "RADWAVE_MEMORY_CAP_MB"
DEFAULT_MEMORY_CAP_MB = 2048.0

# Gaussians are cut where exp(-s^2) drops below this level.
GAUSS_FLOOR = 1e-16
GAUSS_CUT = math.sqrt(-math.log(GAUSS_FLOOR))
# erf tails beyond this many edge widths are below double precision.
ERF_CUT = 6.0


def memory_cap_bytes():
    """Memory cap in bytes, read from RADWAVE_MEMORY_CAP_MB."""
    raw = os.environ.get(MEMORY_ENV, "")
    try:
        mb = float(raw) if raw.strip() else DEFAULT_MEMORY_CAP_MB
    except ValueError:
        raise InvalidArgument(f"{MEMORY_ENV} must be a number, got {raw!r}")
    if mb <= 0:
        raise InvalidArgument(f"{MEMORY_ENV} must be positive")
    return int(mb * 2**20)


def check_memory(nbytes, what):
    cap = memory_cap_bytes()
    if nbytes > cap:
        raise ResourceLimit(
            f"{what} needs {nbytes / 2**20:.1f} MB, above the cap of "
            f"{cap / 2**20:.1f} MB ({MEMORY_ENV})")


@dataclass(frozen=True)
class Geometry:
    """Whole space (r >= 0) or the exterior of a ball of radius R0."""

    kind: str = MINKOWSKI
    R0: float = 0.0

    def __post_init__(self):
        if self.kind == MINKOWSKI:
            if self.R0 != 0:
                raise InvalidArgument("Minkowski geometry requires R0 = 0")
        elif self.kind == EXTERIOR_BALL:
            if not self.R0 > 0:
                raise InvalidArgument("exterior ball requires R0 > 0")
        else:
            raise InvalidArgument(f"unknown geometry kind {self.kind!r}")

    @classmethod
    def minkowski(cls):
        return cls(MINKOWSKI, 0.0)

    @classmethod
    def exterior_ball(cls, R0=0.5):
        return cls(EXTERIOR_BALL, float(R0))

    @property
    def is_exterior(self):
        return self.kind == EXTERIOR_BALL


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid r_i = R0 + i*dr, i = 0..n.

    Node 0 carries the Dirichlet condition.  The grid is sized so that a
    disturbance moving at unit speed never reaches the last two nodes.
    """

    geometry: Geometry
    dr: float
    n: int
    t_end: float
    cfl: float = 0.5

    def __post_init__(self):
        if not self.dr > 0:
            raise InvalidArgument("dr must be positive")
        if self.n < 8:
            raise InvalidArgument("a grid needs at least 8 intervals")
        if not 0 < self.cfl <= 1:
            raise InvalidArgument("cfl must lie in (0, 1]")

    @property
    def R0(self):
        return self.geometry.R0

    @property
    def r_max(self):
        return self.R0 + self.n * self.dr

    @property
    def dt(self):
        return self.cfl * self.dr

    @property
    def r(self):
        return self.R0 + self.dr * np.arange(self.n + 1)

    @property
    def size(self):
        return self.n + 1

    def index_of(self, radius):
        """Index of the first node at or beyond ``radius``."""
        i = math.ceil((radius - self.R0) / self.dr - 1e-9)
        return min(max(i, 0), self.n)

    def describe(self):
        return (f"{self.geometry.kind}(R0={self.R0:g}) dr={self.dr:g} "
                f"n={self.n} t_end={self.t_end:g} cfl={self.cfl:g}")


# Bytes held per node by the stepper and observers (states, stages, scratch).
_WORK_BYTES_PER_NODE = 8 * 40


def make_grid(geometry, dr, t_end, support_radius, cfl=0.5):
    """Grid reaching support_radius + t_end + 2*dr plus a precursor pad.

    The centered scheme leaks an exponentially small precursor ahead of the
    light cone over about 8*(t/dr)^(1/3) nodes; the pad keeps it off the
    frozen outer edge so full-grid and windowed runs agree to rounding.
    """
    if not dr > 0:
        raise InvalidArgument("dr must be positive")
    if not t_end > 0:
        raise InvalidArgument("t_end must be positive")
    if support_radius < 0:
        raise InvalidArgument("support_radius must be non-negative")
    if not 0 < cfl <= 1:
        raise InvalidArgument("cfl must lie in (0, 1]")
    reach = max(support_radius, geometry.R0) + t_end + 2 * dr - geometry.R0
    pad = 16 + math.ceil(8.0 * (t_end / dr) ** (1.0 / 3.0))
    n = max(8, math.ceil(reach / dr - 1e-9) + pad)
    check_memory((n + 1) * _WORK_BYTES_PER_NODE, f"grid with {n + 1} nodes")
    return RadialGrid(geometry, float(dr), int(n), float(t_end), float(cfl))


# ---------------------------------------------------------------------------
# Profiles


class Profile:
    """Smooth radial shape with closed-form first and second derivatives."""

    kind = "profile"

    def __call__(self, r):
        raise NotImplementedError

    def d1(self, r):
        raise NotImplementedError

    def d2(self, r):
        raise NotImplementedError

    def derivative(self, r, order):
        if order == 0:
            return self(r)
        if order == 1:
            return self.d1(r)
        if order == 2:
            return self.d2(r)
        raise InvalidArgument("profile derivatives are available up to order 2")

    @property
    def support(self):
        raise NotImplementedError

    def weighted_antiderivative(self, x):
        """An antiderivative of x * profile(x)."""
        raise UnsupportedProfile(f"{self.kind} has no closed-form antiderivative")

    def spec(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Gaussian(Profile):
    """exp(-((r - center)/width)^2), cut to zero below 1e-16."""

    center: float
    width: float
    kind = "gaussian"

    def __post_init__(self):
        if not self.width > 0:
            raise InvalidArgument("gaussian width must be positive")

    def _s(self, r):
        return (np.asarray(r, dtype=float) - self.center) / self.width

    def _g(self, s):
        return np.where(np.abs(s) < GAUSS_CUT, np.exp(-s * s), 0.0)

    def __call__(self, r):
        return self._g(self._s(r))

    def d1(self, r):
        s = self._s(r)
        return -2.0 * s / self.width * self._g(s)

    def d2(self, r):
        s = self._s(r)
        return (4.0 * s * s - 2.0) / self.width**2 * self._g(s)

    @property
    def support(self):
        return (self.center - GAUSS_CUT * self.width,
                self.center + GAUSS_CUT * self.width)

    def weighted_antiderivative(self, x):
        lo, hi = self.support
        s = self._s(np.clip(np.asarray(x, dtype=float), lo, hi))
        w, c = self.width, self.center
        return c * w * 0.5 * math.sqrt(math.pi) * erf(s) - 0.5 * w * w * np.exp(-s * s)

    def spec(self):
        return f"gaussian:{self.center!r},{self.width!r}"


@dataclass(frozen=True)
class Bump(Profile):
    """exp(1 - 1/(1 - s^2)) on |s| < 1 with s = (r - center)/halfwidth.

    Peak value 1, compact support, C-infinity.
    """

    center: float
    halfwidth: float
    kind = "bump"

    def __post_init__(self):
        if not self.halfwidth > 0:
            raise InvalidArgument("bump halfwidth must be positive")

    def _parts(self, r):
        s = (np.asarray(r, dtype=float) - self.center) / self.halfwidth
        inside = np.abs(s) < 1.0
        q = np.where(inside, 1.0 - s * s, 1.0)
        b = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
        return s, q, b

    def __call__(self, r):
        return self._parts(r)[2]

    def d1(self, r):
        s, q, b = self._parts(r)
        return b * (-2.0 * s / q**2) / self.halfwidth

    def d2(self, r):
        s, q, b = self._parts(r)
        return b * (4 * s * s / q**4 - 2.0 / q**2 - 8 * s * s / q**3) / self.halfwidth**2

    @property
    def support(self):
        return (self.center - self.halfwidth, self.center + self.halfwidth)

    def spec(self):
        return f"bump:{self.center!r},{self.halfwidth!r}"


@dataclass(frozen=True)
class SmoothBox(Profile):
    """Indicator of [a, b] smoothed by erf edges of width ``edge``."""

    a: float
    b: float
    edge: float
    kind = "box"

    def __post_init__(self):
        if not self.b > self.a:
            raise InvalidArgument("box requires a < b")
        if not self.edge > 0:
            raise InvalidArgument("box edge must be positive")

    def _cut(self, r, val):
        lo, hi = self.support
        r = np.asarray(r, dtype=float)
        return np.where((r > lo) & (r < hi), val, 0.0)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        d = self.edge
        return self._cut(r, 0.5 * (erf((r - self.a) / d) - erf((r - self.b) / d)))

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        d = self.edge
        k = 1.0 / (d * math.sqrt(math.pi))
        return self._cut(r, k * (np.exp(-((r - self.a) / d) ** 2)
                                 - np.exp(-((r - self.b) / d) ** 2)))

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        d = self.edge
        k = 1.0 / (d * math.sqrt(math.pi))
        sa, sb = (r - self.a) / d, (r - self.b) / d
        return self._cut(r, k * (-2 * sa / d * np.exp(-sa * sa)
                                 + 2 * sb / d * np.exp(-sb * sb)))

    @property
    def support(self):
        return (self.a - ERF_CUT * self.edge, self.b + ERF_CUT * self.edge)

    @staticmethod
    def _x_erf(x, c, d):
        # antiderivative of x*erf((x - c)/d)
        s = (x - c) / d
        return (0.5 * (x * x - c * c - 0.5 * d * d) * erf(s)
                + d / (2 * math.sqrt(math.pi)) * (x + c) * np.exp(-s * s))

    def weighted_antiderivative(self, x):
        # clipping to the support matches the truncated profile
        lo, hi = self.support
        x = np.clip(np.asarray(x, dtype=float), lo, hi)
        d = self.edge
        return 0.5 * (self._x_erf(x, self.a, d) - self._x_erf(x, self.b, d))

    def spec(self):
        return f"box:{self.a!r},{self.b!r},{self.edge!r}"


_PROFILE_KINDS = {"gaussian": (Gaussian, 2), "bump": (Bump, 2), "box": (SmoothBox, 3)}


def parse_profile(text):
    """Parse ``kind:p1,p2[,p3]`` (or ``none``) into a Profile."""
    if text is None:
        return None
    if isinstance(text, Profile):
        return text
    text = str(text).strip()
    if text.lower() in ("", "none", "zero", "0"):
        return None
    kind, _, args = text.partition(":")
    kind = kind.strip().lower()
    if kind not in _PROFILE_KINDS:
        raise InvalidArgument(f"unknown profile kind {kind!r}")
    cls, nargs = _PROFILE_KINDS[kind]
    try:
        vals = [float(a) for a in args.split(",")] if args.strip() else []
    except ValueError:
        raise InvalidArgument(f"profile parameters must be numbers: {text!r}")
    if len(vals) != nargs:
        raise InvalidArgument(f"{kind} profile takes {nargs} parameters, got {len(vals)}")
    return cls(*vals)


# ---------------------------------------------------------------------------
# Initial data


@dataclass(frozen=True)
class DataProfile:
    """Radial Cauchy data u(0) = eps*f, u_t(0) = eps*g.

    With ``outgoing=True`` the time derivative is derived from f so that the
    reduced field is a purely outgoing pulse: r*g = -(r*f)'.  ``g_shape`` is
    then ignored.
    """

    f_shape: Profile = None
    g_shape: Profile = None
    eps: float = 1.0
    outgoing: bool = False

    def __post_init__(self):
        if not self.eps >= 0:
            raise InvalidArgument("eps must be non-negative")
        if self.outgoing and self.f_shape is None:
            raise InvalidArgument("outgoing data needs an f profile")

    def _shapes(self):
        shapes = [self.f_shape]
        if not self.outgoing:
            shapes.append(self.g_shape)
        return [s for s in shapes if s is not None]

    @property
    def support(self):
        shapes = self._shapes()
        if not shapes:
            return (0.0, 0.0)
        return (min(s.support[0] for s in shapes), max(s.support[1] for s in shapes))

    @property
    def is_zero(self):
        return self.eps == 0 or not self._shapes()

    def with_eps(self, eps):
        return DataProfile(self.f_shape, self.g_shape, float(eps), self.outgoing)

    def v0(self, r):
        r = np.asarray(r, dtype=float)
        if self.f_shape is None or self.eps == 0:
            return np.zeros_like(r)
        return self.eps * r * self.f_shape(r)

    def p0(self, r):
        r = np.asarray(r, dtype=float)
        if self.eps == 0:
            return np.zeros_like(r)
        if self.outgoing:
            f = self.f_shape
            return -self.eps * (f(r) + r * f.d1(r))
        if self.g_shape is None:
            return np.zeros_like(r)
        return self.eps * r * self.g_shape(r)

    def p0_antiderivative(self, x):
        """An antiderivative of the reduced p0 (closed form when available)."""
        x = np.asarray(x, dtype=float)
        if self.eps == 0:
            return np.zeros_like(x)
        if self.outgoing:
            return -self.eps * x * self.f_shape(x)
        if self.g_shape is None:
            return np.zeros_like(x)
        return self.eps * self.g_shape.weighted_antiderivative(x)

    def describe(self):
        f = self.f_shape.spec() if self.f_shape is not None else "none"
        g = "outgoing" if self.outgoing else (
            self.g_shape.spec() if self.g_shape is not None else "none")
        return f"f={f} g={g} eps={self.eps!r}"


def sample_data(profile, grid):
    """Reduced data (v0, p0) = (r*u(0), r*u_t(0)) on the grid nodes."""
    if not profile.is_zero:
        lo, hi = profile.support
        if grid.geometry.is_exterior and not lo > grid.R0 + 4 * grid.dr:
            raise InvalidArgument(
                f"data support starts at {lo:g}, must exceed R0 + 4*dr = "
                f"{grid.R0 + 4 * grid.dr:g}")
        if hi > grid.r_max - 2 * grid.dr:
            raise InvalidArgument(f"data support {hi:g} does not fit in the grid")
    r = grid.r
    v0 = profile.v0(r)
    p0 = profile.p0(r)
    v0[0] = 0.0
    p0[0] = 0.0
    v0[-2:] = 0.0
    p0[-2:] = 0.0
    return v0, p0


# ---------------------------------------------------------------------------
# Nonlinearity and physical fields


@dataclass(frozen=True)
class QuadraticForm:
    """Q(u_t, u_r) = a*u_t^2 + b*u_r^2 + c*u_t*u_r."""

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0

    @property
    def rotation_invariant(self):
        return self.c == 0

    @property
    def is_zero(self):
        return self.a == 0 and self.b == 0 and self.c == 0

    def __call__(self, ut, ur):
        return eval_Q(self, ut, ur)

    def describe(self):
        flag = "" if self.rotation_invariant else " (cross term: not a rotation-invariant 3D form)"
        return f"Q=({self.a!r},{self.b!r},{self.c!r}){flag}"


NULL_FORM = QuadraticForm(1.0, -1.0, 0.0)


def eval_Q(form, ut, ur):
    out = form.a * ut * ut
    if form.b != 0:
        out = out + form.b * ur * ur
    if form.c != 0:
        out = out + form.c * ut * ur
    return out


def parse_form(value):
    if isinstance(value, QuadraticForm):
        return value
    if isinstance(value, str):
        parts = value.replace(",", " ").split()
    else:
        parts = list(value)
    if len(parts) != 3:
        raise InvalidArgument("form needs three coefficients a, b, c")
    try:
        return QuadraticForm(*(float(x) for x in parts))
    except (TypeError, ValueError):
        raise InvalidArgument(f"form coefficients must be numbers: {value!r}")


def v_from_u(u, r):
    return np.asarray(r) * np.asarray(u)


def u_from_v(v, grid):
    """u = v/r, with u(0) = dv/dr(0) by one-sided differencing at the origin."""
    r = grid.r[: len(v)]
    u = np.empty_like(v)
    if grid.geometry.is_exterior:
        u[:] = v / r
        return u
    u[1:] = v[1:] / r[1:]
    u[0] = (4 * v[1] - v[2]) / (2 * grid.dr)
    return u


def radial_gradient(f, dr):
    """Centered first derivative, one-sided second order at both ends."""
    return np.gradient(f, dr, edge_order=2)


def u_prime(v, p, grid, lo=0):
    """Physical (u_t, u_r) from the reduced state on nodes lo..lo+len(v)-1."""
    m = len(v)
    r = grid.r[lo:lo + m]
    vr = radial_gradient(v, grid.dr)
    ut = np.empty(m)
    ur = np.empty(m)
    if lo == 0 and not grid.geometry.is_exterior:
        ut[1:] = p[1:] / r[1:]
        ur[1:] = (vr[1:] - v[1:] / r[1:]) / r[1:]
        ut[0] = (4 * p[1] - p[2]) / (2 * grid.dr)
        ur[0] = 0.0
    else:
        ut[:] = p / r
        ur[:] = (vr - v / r) / r
    return ut, ur
