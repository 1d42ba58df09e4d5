"""Blow-up time against data size and the fit ln T = c/eps + b.

Default scenario: Q = u_t^2 with an outgoing Gaussian pulse of size eps
centred at r = 12.  Along the outgoing characteristics the radiation field
r*u_t obeys, to leading order, a Riccati equation in ln t, so blow-up
happens at ln T ~ c/eps.  The monitor is the radiation field
r*(|u_t| + |u_r|) exceeding 20 times its initial value; only the region
r >= t - 15 can influence it, so the trailing part of the grid is dropped.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .errors import InsufficientData, InvalidArgument, ResourceLimit
from .model import DataProfile, Gaussian, Geometry, QuadraticForm, make_grid
from .semilinear import RADIATION, ode_blowup, run

DEFAULT_EPS = (0.5, 0.3, 0.2, 0.15, 0.12, 0.1, 0.09, 0.08)
RESOLVED_TOL = 0.05
MAX_DOUBLINGS = 6


@dataclass(frozen=True)
class LifespanSetup:
    """Scenario and numerics for lifespan measurements."""

    form: QuadraticForm = QuadraticForm(1.0, 0.0, 0.0)
    profile: object = Gaussian(12.0, 2.0)
    outgoing: bool = True
    dr: float = 0.0125
    cfl: float = 0.5
    monitor: str = RADIATION
    threshold_factor: float = 20.0
    lag: float = 15.0
    t_guess: float = 50.0
    refine: bool = True

    def data(self, eps):
        if self.outgoing:
            return DataProfile(self.profile, None, float(eps), outgoing=True)
        return DataProfile(None, self.profile, float(eps))

    def describe(self):
        kind = "outgoing" if self.outgoing else "g-data"
        return (f"Q={self.form.describe()} profile={self.profile.spec()} {kind} "
                f"dr={self.dr:g} monitor={self.monitor} x{self.threshold_factor:g} "
                f"lag={self.lag}")


@dataclass
class LifespanRecord:
    """One measured lifespan.

    t_star is None when the run survived to ``horizon`` or stopped early
    (``reason`` says why).  ``resolved`` means the halved grid gave a blow-up
    time within 5%.
    """

    eps: float
    t_star: float = None
    horizon: float = 0.0
    dr: float = 0.0
    threshold: float = math.inf
    resolved: bool = False
    t_star_fine: float = None
    reason: str = ""

    @property
    def survived(self):
        return self.t_star is None and self.reason == "survived"

    def row(self):
        nan = float("nan")
        return (self.eps, nan if self.t_star is None else self.t_star, int(self.resolved),
                self.dr, nan if self.t_star_fine is None else self.t_star_fine,
                self.horizon, self.reason)


def _single_run(eps, setup, dr, horizon):
    data = setup.data(eps)
    grid = make_grid(Geometry.minkowski(), dr, horizon, data.support[1], setup.cfl)
    out = run(grid, data, setup.form, horizon, threshold_factor=setup.threshold_factor,
              monitor=setup.monitor, lag=setup.lag, log_norms=False)
    return out


def _blowup_time(eps, setup, dr, t_guess):
    """(t_star or None, final horizon, threshold, reason) with doubling."""
    horizon = float(t_guess)
    threshold = math.inf
    for _ in range(MAX_DOUBLINGS + 1):
        try:
            out = _single_run(eps, setup, dr, horizon)
        except ResourceLimit as exc:
            return None, horizon, threshold, f"memory: {exc}"
        threshold = out.threshold
        if out.t_star is not None:
            return out.t_star, horizon, threshold, out.blowup[1]
        horizon *= 2.0
    return None, horizon / 2.0, threshold, "survived"


def measure_lifespan(eps, setup=None, t_guess=None, mode="pde"):
    """Blow-up time for data size eps, with a halved-grid check.

    mode "ode" integrates y' = y^2, y(0) = eps with the setup's time step
    instead (spatially uncoupled oracle, threshold 1e4/eps).
    """
    setup = setup or LifespanSetup()
    if eps < 0:
        raise InvalidArgument("eps must be non-negative")
    if mode == "ode":
        dt = setup.cfl * setup.dr
        th = 1e4 / eps if eps > 0 else math.inf
        ts = ode_blowup(eps, dt, th) if eps > 0 else None
        return LifespanRecord(eps, ts, 10.0 / eps if eps > 0 else 0.0, setup.dr, th,
                              ts is not None, ts, "threshold" if ts else "survived")
    if mode != "pde":
        raise InvalidArgument(f"unknown mode {mode!r}")
    guess = setup.t_guess if t_guess is None else t_guess
    if eps == 0:
        return LifespanRecord(0.0, None, guess, setup.dr, math.inf, False, None, "survived")
    ts, horizon, th, reason = _blowup_time(eps, setup, setup.dr, guess)
    rec = LifespanRecord(eps, ts, horizon, setup.dr, th, False, None, reason)
    if ts is not None and setup.refine:
        fine_horizon = (1.0 + 2 * RESOLVED_TOL) * ts
        try:
            out = _single_run(eps, setup, setup.dr / 2.0, fine_horizon)
            rec.t_star_fine = out.t_star
        except ResourceLimit as exc:
            rec.reason = f"refinement memory: {exc}"
        if rec.t_star_fine is not None:
            rec.resolved = abs(rec.t_star_fine - ts) <= RESOLVED_TOL * ts
    elif ts is not None:
        rec.resolved = True
    return rec


# ---------------------------------------------------------------------------
# Fit


def fit_line(x, y):
    """Least squares y = c*x + b; returns (c, b, r_squared)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([x, np.ones_like(x)])
    (c, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(c), float(b), _r2(y, A @ np.array([c, b]))


def _r2(y, yhat):
    ss = float(np.sum((y - y.mean()) ** 2))
    if ss == 0:
        return 1.0
    return max(0.0, 1.0 - float(np.sum((y - yhat) ** 2)) / ss)


class LifespanLaw(BaseEstimator, RegressorMixin):
    """Regressor T(eps) = exp(c/eps + b), fitted in log space.

    ``fit(eps, t_star)`` accepts eps as shape (n,) or (n, 1).  ``score``
    is the coefficient of determination of ln T against 1/eps.
    """

    def fit(self, X, y):
        eps = _eps_column(X)
        y = np.asarray(y, dtype=float)
        if len(eps) != len(y):
            raise InvalidArgument("eps and t_star lengths differ")
        if len(eps) < 2:
            raise InsufficientData("need at least two records")
        if np.any(y <= 0):
            raise InvalidArgument("lifespans must be positive")
        self.c_, self.b_, self.r2_ = fit_line(1.0 / eps, np.log(y))
        return self

    def predict(self, X):
        check_is_fitted(self, "c_")
        return np.exp(self.c_ / _eps_column(X) + self.b_)

    def score(self, X, y, sample_weight=None):
        check_is_fitted(self, "c_")
        eps = _eps_column(X)
        ly = np.log(np.asarray(y, dtype=float))
        return _r2(ly, self.c_ / eps + self.b_)


def _eps_column(X):
    eps = np.asarray(X, dtype=float)
    if eps.ndim == 2:
        if eps.shape[1] != 1:
            raise InvalidArgument("eps must be a single column")
        eps = eps[:, 0]
    if np.any(eps <= 0):
        raise InvalidArgument("eps must be positive")
    return eps


@dataclass
class LifespanFit:
    """Fit of ln t_star = c_hat/eps + b_hat over resolved blow-up records."""

    records: list
    c_hat: float
    b_hat: float
    r_squared: float
    c_fine: float = None
    c_stability: float = None
    quadratic_gain: float = None
    setup: LifespanSetup = None
    notes: list = field(default_factory=list)

    def summary(self):
        lines = [f"c_hat = {self.c_hat!r}", f"b_hat = {self.b_hat!r}",
                 f"r_squared = {self.r_squared!r}"]
        if self.c_fine is not None:
            lines.append(f"c_hat_halved_grid = {self.c_fine!r}")
            lines.append(f"c_stability = {self.c_stability!r}")
        if self.quadratic_gain is not None:
            lines.append(f"quadratic_r2_gain = {self.quadratic_gain!r}")
        used = [r for r in self.records if _usable(r)]
        lines.append(f"records_used = {len(used)} of {len(self.records)}")
        if used:
            ts = [r.t_star for r in used]
            lines.append(f"decades_spanned = {math.log10(max(ts) / min(ts))!r}")
        lines.extend(self.notes)
        return "\n".join(lines)


def _usable(rec):
    return rec.t_star is not None and rec.resolved and rec.t_star > 0


def fit_records(records, setup=None):
    used = [r for r in records if _usable(r)]
    if len(used) < 4:
        raise InsufficientData(f"only {len(used)} resolved blow-up records (need 4)")
    eps = np.array([r.eps for r in used])
    ts = np.array([r.t_star for r in used])
    law = LifespanLaw().fit(eps, ts)
    x, y = 1.0 / eps, np.log(ts)
    quad = np.polyfit(x, y, 2)
    gain = _r2(y, np.polyval(quad, x)) - law.r2_
    fit = LifespanFit(records, law.c_, law.b_, law.r2_, quadratic_gain=gain, setup=setup)
    fine = [r for r in used if r.t_star_fine is not None]
    if len(fine) == len(used):
        c_f, _, _ = fit_line(x, np.log([r.t_star_fine for r in fine]))
        fit.c_fine = c_f
        fit.c_stability = abs(c_f - law.c_) / abs(law.c_) if law.c_ != 0 else math.inf
    return fit


def _predict_horizon(done, eps, base):
    """Horizon guess from the last two blow-up times (ln T linear in 1/eps)."""
    pts = [(r.eps, r.t_star) for r in done if r.t_star is not None]
    if len(pts) < 2:
        if pts:
            return max(base, 2.0 * pts[-1][1])
        return base
    (e1, t1), (e2, t2) = pts[-2], pts[-1]
    if e1 == e2:
        return max(base, 2.0 * t2)
    slope = (math.log(t2) - math.log(t1)) / (1 / e2 - 1 / e1)
    pred = math.exp(math.log(t2) + slope * (1 / eps - 1 / e2))
    return max(base, 1.3 * pred)


def _measure_task(args):
    eps, setup, guess = args
    return measure_lifespan(eps, setup, t_guess=guess)


def sweep(eps_list, setup=None, threads=1):
    """Records for eps_list, largest eps first, with predicted horizons.

    With threads > 1 horizons come from the setup guess with doubling, so
    results do not depend on scheduling.
    """
    setup = setup or LifespanSetup()
    eps_sorted = sorted((float(e) for e in eps_list), reverse=True)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            recs = list(ex.map(_measure_task, [(e, setup, None) for e in eps_sorted]))
        return recs
    recs = []
    for e in eps_sorted:
        guess = _predict_horizon(recs, e, setup.t_guess)
        recs.append(measure_lifespan(e, setup, t_guess=guess))
    return recs


def sweep_and_fit(eps_list=DEFAULT_EPS, setup=None, threads=1):
    if len(eps_list) < 5:
        raise InvalidArgument("the sweep needs at least 5 eps values")
    setup = setup or LifespanSetup()
    recs = sweep(eps_list, setup, threads)
    return fit_records(recs, setup)


def null_form_contrast(records, setup=None, factor=10.0, dr=None):
    """Re-run each blow-up record with the null form to factor * t_star.

    Exploratory: the null form is outside the lower-bound theory.  Returns
    records whose reason is "survived" when no blow-up occurred.
    """
    setup = setup or LifespanSetup()
    nsetup = replace(setup, form=QuadraticForm(1.0, -1.0, 0.0), refine=False,
                     dr=setup.dr if dr is None else dr)
    out = []
    for r in records:
        if r.t_star is None:
            continue
        horizon = factor * r.t_star
        o = _single_run(r.eps, nsetup, nsetup.dr, horizon)
        reason = "survived" if o.t_star is None else o.blowup[1]
        out.append(LifespanRecord(r.eps, o.t_star, horizon, nsetup.dr, o.threshold,
                                  False, None, reason))
    return out
