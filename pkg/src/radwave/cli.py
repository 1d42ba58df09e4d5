"""Command-line front end: radwave <subcommand> [--config PATH] [flags].

Configuration is a flat YAML mapping (strings, numbers, lists).  Values
resolve as built-in defaults, then the config file, then flags.  Every run
writes manifest.txt (the resolved config, itself a valid config file),
one or more CSV files, summary.txt and, with ``plot: true``, SVG charts.

Exit codes: 0 on success (blow-up or divergence is reported as data),
2 for an invalid configuration, 1 for an internal error.
"""

import argparse
import math
import os
import sys
from importlib import metadata

import numpy as np
import yaml

from . import decay, estimates, lifespan, picard
from .errors import InvalidArgument, RadwaveError, ResourceLimit, UnsupportedProfile
from .model import (MEMORY_ENV, DataProfile, Geometry, make_grid, parse_form,
                    parse_profile)
from .semilinear import RADIATION, SUP, run

SUBCOMMANDS = ("simulate", "verify-estimates", "picard", "lifespan", "decay")

DEFAULTS = {
    "simulate": {
        "geometry": "minkowski", "R0": 0.5, "dr": 0.05, "cfl": 0.5, "eps": 0.1,
        "f": "gaussian:4,1", "g": "none", "outgoing": False, "form": [1.0, 0.0, 0.0],
        "T": 20.0, "threshold_factor": 1e4, "monitor": SUP, "lag": None,
        "N": 0, "rows": 400, "plot": False,
    },
    "verify-estimates": {
        "ids": list(estimates.ESTIMATE_IDS), "seed": 0, "n_seeds": 20, "T": 1000.0,
        "dr": 0.1, "N": 1, "log_check": False, "log_T": 1e4, "plot": False,
    },
    "picard": {
        "geometry": "minkowski", "R0": 0.5, "dr": 0.1, "cfl": 0.5, "eps": 1e-3,
        "f": "gaussian:3,0.6", "g": "none", "form": [1.0, 0.0, 0.0], "T": 100.0,
        "K_max": 30, "tol_abs": 1e-12, "N": 0, "compare_direct": True, "plot": False,
    },
    "lifespan": {
        "eps_list": list(lifespan.DEFAULT_EPS), "dr": 0.0125, "profile": "gaussian:12,2",
        "outgoing": True, "form": [1.0, 0.0, 0.0], "monitor": RADIATION,
        "threshold_factor": 20.0, "lag": 15.0, "t_guess": 50.0, "refine": True,
        "null_contrast": False, "null_dr": 0.05, "plot": False,
    },
    "decay": {
        "dr": decay.PRODUCTION_DR, "T": 16.0, "R0": 0.5, "radius": 4.0, "t_check": 10.0,
        "seed": 0, "n_seeds": 10, "bound_T": 60.0, "bound_dr": 0.05, "plot": False,
    },
}


class ConfigError(InvalidArgument):
    """Invalid configuration (exit code 2)."""


# ---------------------------------------------------------------------------
# Config and output helpers


def package_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a flat key: value mapping")
    for k, v in data.items():
        if isinstance(v, dict):
            raise ConfigError(f"config key {k!r}: nesting is not allowed")
    return data


def resolve_config(sub, file_cfg, flags):
    cfg = dict(DEFAULTS[sub])
    file_cfg = {k: v for k, v in file_cfg.items() if k not in ("subcommand", "version")}
    unknown = sorted(set(file_cfg) - set(cfg))
    if unknown:
        raise ConfigError(f"unknown config keys for {sub}: {', '.join(unknown)}")
    cfg.update(file_cfg)
    for key in ("seed", "dr", "eps"):
        val = flags.get(key)
        if val is None:
            continue
        if key == "eps" and sub == "lifespan":
            cfg["eps_list"] = [val]
        elif key not in cfg:
            raise ConfigError(f"--{key} does not apply to {sub}")
        else:
            cfg[key] = val
    return cfg


def _num(cfg, key, lo=None, positive=False, integer=False, allow_none=False):
    val = cfg[key]
    if val is None and allow_none:
        return None
    try:
        x = int(val) if integer else float(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {val!r}")
    if integer and float(val) != x:
        raise ConfigError(f"{key} must be an integer")
    if positive and not x > 0:
        raise ConfigError(f"{key} must be positive")
    if lo is not None and x < lo:
        raise ConfigError(f"{key} must be >= {lo}")
    if not integer and not math.isfinite(x):
        raise ConfigError(f"{key} must be finite")
    return x


def _bool(cfg, key):
    val = cfg[key]
    if not isinstance(val, bool):
        raise ConfigError(f"{key} must be true or false")
    return val


def _geometry(cfg):
    kind = str(cfg["geometry"])
    if kind == "minkowski":
        return Geometry.minkowski()
    if kind == "exterior_ball":
        return Geometry.exterior_ball(_num(cfg, "R0", positive=True))
    raise ConfigError(f"geometry must be minkowski or exterior_ball, got {kind!r}")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    if x is None:
        return ""
    s = str(x)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def write_csv(path, header, rows):
    """Comma separated, header row, LF endings, floats at 17 digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_manifest(out, sub, cfg, files):
    lines = [f"# radwave {package_version()}", f"# outputs: {' '.join(sorted(files))}",
             f"subcommand: {sub}"]
    for k in sorted(cfg):
        # dump inside a one-element flow list, then drop the brackets
        val = yaml.safe_dump([cfg[k]], default_flow_style=True, width=10**6).strip()
        lines.append(f"{k}: {val[1:-1]}")
    cap = os.environ.get(MEMORY_ENV)
    lines.append(f"# {MEMORY_ENV}={cap if cap is not None else 'default'}")
    with open(os.path.join(out, "manifest.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary(out, lines):
    with open(os.path.join(out, "summary.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def plot_lines(path, title, xlabel, ylabel, series, logx=False, logy=False):
    """Deterministic SVG line chart; ``series`` is a list of (label, x, y)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "radwave"
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, x, y in series:
        ax.plot(x, y, label=label, lw=1.2)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _sample_rows(n, rows):
    if n <= rows:
        return np.arange(n)
    idx = np.unique(np.linspace(0, n - 1, rows).round().astype(int))
    return idx


# ---------------------------------------------------------------------------
# Subcommands


def cmd_simulate(cfg, out, threads):
    geom = _geometry(cfg)
    dr = _num(cfg, "dr", positive=True)
    cfl = _num(cfg, "cfl", positive=True)
    eps = _num(cfg, "eps", lo=0.0)
    T = _num(cfg, "T", positive=True)
    lag = _num(cfg, "lag", positive=True, allow_none=True)
    N = _num(cfg, "N", lo=0, integer=True)
    rows = _num(cfg, "rows", positive=True, integer=True)
    outgoing = _bool(cfg, "outgoing")
    form = parse_form(cfg["form"])
    monitor = str(cfg["monitor"])
    f = parse_profile(cfg["f"])
    g = parse_profile(cfg["g"])
    data = DataProfile(f, g, eps, outgoing)
    from .norms import NormObserver
    grid = make_grid(geom, dr, T, data.support[1] if not data.is_zero else geom.R0, cfl)
    obs = NormObserver(grid, N=N, ball_radii=(1.0,), local_radii=(4.0,), annuli=False)
    res = run(grid, data, form, T, threshold_factor=_num(cfg, "threshold_factor", positive=True),
              monitor=monitor, lag=lag, observer=obs)
    s = res.series
    idx = _sample_rows(len(s.t), rows)
    kss_n = s.kss_normalized()
    energy = np.sqrt(s.energy_sq[(0, 0)])
    zsum = s.z_sum()
    write_csv(os.path.join(out, "series.csv"),
              ["t", "energy", "kss", "kss_normalized", "local_energy_r4", "z_sum"],
              [(s.t[i], energy[i], s.kss[(0, 0)][i], kss_n[i], s.local[4.0][i], zsum[i])
               for i in idx])
    v, p = res.trajectory.final_v, res.trajectory.final_p
    from .model import u_from_v
    u = u_from_v(v, grid)
    ridx = _sample_rows(grid.size, 2000)
    write_csv(os.path.join(out, "final_state.csv"), ["r", "v", "p", "u"],
              [(grid.r[i], v[i], p[i], u[i]) for i in ridx])
    files = ["series.csv", "final_state.csv"]
    lines = [f"subcommand = simulate", f"grid = {grid.describe()}",
             f"data = {data.describe()}", f"form = {form.describe()}"]
    if res.blowup is not None:
        lines.append(f"blowup = {res.blowup[1]} at t = {res.blowup[0]!r}")
    else:
        lines.append(f"blowup = none (survived to T = {T!r})")
    lines += [f"energy_initial = {float(energy[0])!r}",
              f"energy_final = {float(energy[-1])!r}",
              f"kss_normalized_final = {float(kss_n[-1])!r}", f"z_sum_max = {float(np.max(zsum))!r}",
              f"monitor_initial = {float(res.initial_sup)!r}",
              f"threshold = {float(res.threshold)!r}"]
    if _bool(cfg, "plot"):
        plot_lines(os.path.join(out, "energy.svg"), "energy and normalized KSS", "t", "norm",
                   [("||u'||", s.t[idx], energy[idx]), ("KSS normalized", s.t[idx], kss_n[idx])])
        files.append("energy.svg")
    return files, lines


def cmd_verify(cfg, out, threads):
    ids = cfg["ids"]
    if isinstance(ids, str):
        ids = [ids]
    ids = [str(i) for i in ids]
    for i in ids:
        if i not in estimates.ESTIMATE_IDS:
            raise ConfigError(f"unknown estimate id {i!r}")
    seed = _num(cfg, "seed", lo=0, integer=True)
    n = _num(cfg, "n_seeds", positive=True, integer=True)
    T = _num(cfg, "T", positive=True)
    dr = _num(cfg, "dr", positive=True)
    N = _num(cfg, "N", lo=0, integer=True)
    if N > 2:
        raise ConfigError("N must be 0, 1 or 2")
    reps = estimates.run_battery(ids, range(seed, seed + n), T, dr, N, threads)
    write_csv(os.path.join(out, "battery.csv"),
              ["estimate_id", "seed", "geometry", "max_ratio", "tail_slope"],
              [(r.estimate_id, r.extra["seed"], r.extra["geometry"], r.max_ratio, r.tail_slope)
               for r in reps])
    write_csv(os.path.join(out, "ratio_series.csv"),
              ["estimate_id", "seed", "t", "lhs", "rhs", "ratio"],
              [(r.estimate_id, r.extra["seed"], t, a, b, q) for r in reps
               for t, a, b, q in zip(r.times, r.lhs, r.rhs, r.ratio)])
    files = ["battery.csv", "ratio_series.csv"]
    lines = [f"subcommand = verify-estimates", f"T = {T!r}", f"dr = {dr!r}",
             f"seeds = {seed}..{seed + n - 1}"]
    for i in ids:
        rs = [r for r in reps if r.estimate_id == i]
        finite = all(math.isfinite(r.max_ratio) for r in rs)
        worst = max(r.tail_slope for r in rs)
        lines.append(f"{i}: scenarios = {len(rs)} max_ratio = {max(r.max_ratio for r in rs)!r} "
                     f"worst_tail_slope = {worst!r} finite = {finite} "
                     f"slope_ok = {worst <= 0.02}")
    if _bool(cfg, "log_check"):
        slope, icpt, r2 = log_sharpness(_num(cfg, "log_T", positive=True), dr)
        lines.append(f"kss_log_growth: slope = {slope!r} r_squared = {r2!r}")
    if _bool(cfg, "plot"):
        series = [(f"{r.estimate_id} seed {r.extra['seed']}", r.times, r.ratio)
                  for r in reps if r.estimate_id == ids[0]]
        plot_lines(os.path.join(out, "ratios.svg"), f"{ids[0]} ratio", "t", "lhs/rhs",
                   series, logx=True)
        files.append("ratios.svg")
    return files, lines


def log_sharpness(T=1e4, dr=0.1):
    """Raw KSS accumulator of a free outgoing wave fitted against ln t."""
    from .linear import solve_linear
    from .model import Gaussian
    from .norms import NormObserver
    data = DataProfile(Gaussian(6.0, 1.5), None, 1.0)
    grid = make_grid(Geometry.minkowski(), dr, T, data.support[1])
    obs = NormObserver(grid, N=0, ball_radii=(1.0,), local_radii=(), annuli=False)
    solve_linear(grid, data, None, T, stride=None, observer=obs, lag=data.support[1] + 10.0)
    return estimates.kss_log_fit(obs.series, min(1e2, T / 100), T)


def cmd_picard(cfg, out, threads):
    geom = _geometry(cfg)
    dr = _num(cfg, "dr", positive=True)
    eps = _num(cfg, "eps", lo=0.0)
    T = _num(cfg, "T", positive=True)
    data = DataProfile(parse_profile(cfg["f"]), parse_profile(cfg["g"]), eps)
    form = parse_form(cfg["form"])
    pc = picard.PicardConfig(data, form, T, _num(cfg, "K_max", positive=True, integer=True),
                             _num(cfg, "tol_abs", positive=True),
                             _num(cfg, "N", lo=0, integer=True))
    support = data.support[1] if not data.is_zero else geom.R0
    grid = make_grid(geom, dr, T, support, _num(cfg, "cfl", positive=True))
    rep = picard.run_picard(pc, grid)
    write_csv(os.path.join(out, "picard.csv"),
              ["k", "M_k", "A_k", "ratio", "bounded", "contracting"], rep.rows())
    files = ["picard.csv"]
    ratios = rep.ratios[1:]
    lines = [f"subcommand = picard", f"geometry = {grid.geometry.kind}",
             f"grid = {grid.describe()}", f"eps = {eps!r}", f"T = {T!r}",
             f"iterates = {rep.K}", f"converged = {rep.converged}",
             f"diverged = {rep.diverged}", f"C0_hat = {rep.C0_hat!r}",
             f"C_kss = {rep.C_kss!r}", f"gate_value = {rep.gate_value!r}",
             f"gate_ok = {rep.gate_ok}", f"all_bounded = {all(rep.bounded)}",
             f"max_ratio_k_ge_2 = {max(ratios) if ratios else 0.0!r}"]
    if rep.local_constant is not None:
        lines.append(f"local_constant = {rep.local_constant!r}")
    if _bool(cfg, "compare_direct") and rep.final is not None:
        V, P = rep.final_u
        direct = run(grid, data, form, T, stride=1, log_norms=False, threshold=math.inf)
        diff = max(float(np.max(np.abs(direct.trajectory.v - V))),
                   float(np.max(np.abs(direct.trajectory.p - P))))
        lines.append(f"max_diff_direct = {diff!r}")
    if _bool(cfg, "plot"):
        k = np.arange(rep.K)
        plot_lines(os.path.join(out, "picard.svg"), "Picard diagnostics", "k", "value",
                   [("M_k", k, rep.M), ("A_k", k, np.maximum(rep.A, 1e-300))], logy=True)
        files.append("picard.svg")
    return files, lines


def cmd_lifespan(cfg, out, threads):
    eps_list = cfg["eps_list"]
    if not isinstance(eps_list, (list, tuple)):
        eps_list = [eps_list]
    try:
        eps_list = [float(e) for e in eps_list]
    except (TypeError, ValueError):
        raise ConfigError("eps_list must be a list of numbers")
    if not eps_list or any(not e > 0 for e in eps_list):
        raise ConfigError("eps_list entries must be positive")
    setup = lifespan.LifespanSetup(
        form=parse_form(cfg["form"]), profile=parse_profile(cfg["profile"]),
        outgoing=_bool(cfg, "outgoing"), dr=_num(cfg, "dr", positive=True),
        monitor=str(cfg["monitor"]), threshold_factor=_num(cfg, "threshold_factor", positive=True),
        lag=_num(cfg, "lag", positive=True, allow_none=True),
        t_guess=_num(cfg, "t_guess", positive=True), refine=_bool(cfg, "refine"))
    if setup.profile is None:
        raise ConfigError("profile must not be none")
    if setup.monitor not in (SUP, RADIATION):
        raise ConfigError(f"monitor must be {SUP} or {RADIATION}")
    recs = lifespan.sweep(eps_list, setup, threads)
    write_csv(os.path.join(out, "lifespan.csv"),
              ["eps", "t_star", "resolved", "dr", "t_star_halved", "horizon", "reason"],
              [r.row() for r in recs])
    files = ["lifespan.csv"]
    lines = [f"subcommand = lifespan", f"setup = {setup.describe()}"]
    fit = None
    if len(eps_list) >= 5:
        try:
            fit = lifespan.fit_records(recs, setup)
            lines.append("[fit]")
            lines.append(fit.summary())
        except RadwaveError as exc:
            lines.append(f"fit unavailable: {exc}")
    else:
        lines.append("fit skipped: fewer than 5 eps values")
    if _bool(cfg, "null_contrast"):
        nulls = lifespan.null_form_contrast(recs, setup, dr=_num(cfg, "null_dr", positive=True))
        write_csv(os.path.join(out, "null_contrast.csv"),
                  ["eps", "t_star", "horizon", "dr", "reason"],
                  [(r.eps, math.nan if r.t_star is None else r.t_star, r.horizon, r.dr,
                    r.reason) for r in nulls])
        files.append("null_contrast.csv")
        lines.append("[null form contrast, exploratory]")
        lines.append(f"all_survived = {all(r.survived for r in nulls)}")
    if _bool(cfg, "plot") and fit is not None:
        used = [r for r in recs if r.t_star is not None and r.resolved]
        x = np.array([1 / r.eps for r in used])
        plot_lines(os.path.join(out, "lifespan.svg"), "ln T against 1/eps", "1/eps", "ln T",
                   [("measured", x, np.log([r.t_star for r in used])),
                    ("fit", x, fit.c_hat * x + fit.b_hat)])
        files.append("lifespan.svg")
    return files, lines


def cmd_decay(cfg, out, threads):
    dr = _num(cfg, "dr", positive=True)
    T = _num(cfg, "T", positive=True)
    R0 = _num(cfg, "R0", positive=True)
    radius = _num(cfg, "radius", positive=True)
    t_check = _num(cfg, "t_check", positive=True)
    if not radius > R0:
        raise ConfigError("radius must exceed R0")
    data = decay.default_data()
    traj, s = decay.decay_run(dr, T, R0, radius, data)
    t_ev = decay.evacuation_time(data.support[1], R0, radius)
    write_csv(os.path.join(out, "decay_series.csv"), ["t", "local_energy"],
              list(zip(s.times, s.local_energy)))
    files = ["decay_series.csv"]
    lines = [f"subcommand = decay", f"grid = {traj.grid.describe()}",
             f"data = {data.describe()}", f"evacuation_time = {t_ev!r}",
             f"peak_local_energy = {s.peak!r}",
             f"max_after_evacuation_relative = {s.max_after(t_ev) / s.peak!r}",
             f"local_energy_at_t_check = {s.value_at(min(t_check, T))!r}"]
    try:
        fit = decay.fit_decay(s, t_start=0.0)
        lines.append(f"decay_fit: {fit.summary()}")
    except RadwaveError as exc:
        lines.append(f"decay_fit unavailable: {exc}")
    seed = _num(cfg, "seed", lo=0, integer=True)
    n = _num(cfg, "n_seeds", positive=True, integer=True)
    bounds = decay.local_bound_check(range(seed, seed + n), _num(cfg, "bound_T", positive=True),
                                     _num(cfg, "bound_dr", positive=True))
    write_csv(os.path.join(out, "local_bound.csv"), ["seed", "max_ratio", "final_ratio"],
              [(b.seed, b.max_ratio, b.final_ratio) for b in bounds])
    files.append("local_bound.csv")
    mx = [b.max_ratio for b in bounds]
    lines.append(f"local_bound: seeds = {n} max_ratio = {max(mx)!r} min_ratio = {min(mx)!r}")
    if _bool(cfg, "plot"):
        plot_lines(os.path.join(out, "decay.svg"), "local energy", "t", "E_loc",
                   [("E_loc", s.times, np.maximum(s.local_energy, 1e-300))], logy=True)
        files.append("decay.svg")
    return files, lines


COMMANDS = {"simulate": cmd_simulate, "verify-estimates": cmd_verify, "picard": cmd_picard,
            "lifespan": cmd_lifespan, "decay": cmd_decay}


def build_parser():
    ap = argparse.ArgumentParser(
        prog="radwave",
        description="Radial semilinear wave experiments: simulations, estimate checks, "
                    "Picard diagnostics, lifespan sweeps and local energy decay.",
        epilog=f"Memory cap in MB is read from ${MEMORY_ENV} (default 2048).")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", metavar="PATH", help="flat YAML config file")
    ap.add_argument("--out", metavar="DIR", default=None,
                    help="output directory (default: radwave-<subcommand>)")
    ap.add_argument("--seed", type=int, help="base seed")
    ap.add_argument("--dr", type=float, help="radial grid step")
    ap.add_argument("--eps", type=float, help="data size (single sweep point for lifespan)")
    ap.add_argument("--threads", type=int, default=1, help="worker processes")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = args.out or f"radwave-{args.subcommand}"
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = resolve_config(args.subcommand, load_config(args.config),
                             {"seed": args.seed, "dr": args.dr, "eps": args.eps})
        os.makedirs(out, exist_ok=True)
        files, lines = COMMANDS[args.subcommand](cfg, out, args.threads)
        write_summary(out, lines)
        write_manifest(out, args.subcommand, cfg, files + ["summary.txt"])
    except (InvalidArgument, UnsupportedProfile, ResourceLimit) as exc:
        print(f"radwave: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as an internal error
        print(f"radwave: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"radwave {args.subcommand}: wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
