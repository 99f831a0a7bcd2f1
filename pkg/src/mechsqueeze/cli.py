"""Command-line front end: each study as CSV or JSON data.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import math
import sys
import warnings
from contextlib import contextmanager

import numpy as np

from . import __version__
from .conditional import boundary_curves, conditional_covariance, covariance_grid, rwa_baseline, wigner
from .montecarlo import (
    SimulationConfig,
    apply_filter,
    config_hash,
    error_statistics,
    simulate,
    write_record_csv,
)
from .params import CONSTANTS, OscillatorParams, classify, derive
from .wiener import (
    ExcessNoiseModel,
    clean_squeezing_crossing,
    excess_conditional_covariance,
    excess_position_filter,
    excess_squeezing_threshold,
    measured_factor,
    measured_spectrum,
    mechanical_spectrum,
    momentum_filter,
    position_filter,
)

__all__ = ["main", "build_parser", "read_config"]

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
MAX_GRID_POINTS = 10**7
MAX_RECORD_BYTES = 4e9
TWO_PI = 2.0 * math.pi


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config file

def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise UsageError(f"{path}:{lineno}: empty key")
            out[key.replace("-", "_")] = value
    return out


def _config_argv(parser: argparse.ArgumentParser, values: dict[str, str]) -> list[str]:
    """Translate config keys into flags of ``parser``; unknown keys are rejected."""
    flags = {}
    for action in parser._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                flags[opt[2:].replace("-", "_")] = (opt, action)
    argv = []
    for key, value in values.items():
        if key not in flags or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        opt, action = flags[key]
        if action.nargs == 0:
            if value.lower() in ("1", "true", "yes", "on"):
                argv.append(opt)
            elif value.lower() not in ("0", "false", "no", "off"):
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
        else:
            argv += [opt, value]
    return argv


# ---------------------------------------------------------------------------
# flags

def _frequency(group, name: str, help_text: str, default_hz: float | None = None):
    ex = group.add_mutually_exclusive_group()
    ex.add_argument(f"--{name}-hz", type=float, default=default_hz, help=f"{help_text} (Hz, times 2 pi)")
    ex.add_argument(f"--{name}-rad-s", type=float, help=f"{help_text} (rad/s)")


def _resolve_frequency(args, name: str) -> float | None:
    rad = getattr(args, f"{name}_rad_s")
    if rad is not None:
        return rad
    hz = getattr(args, f"{name}_hz")
    return None if hz is None else TWO_PI * hz


def _add_oscillator(p, omega_hz=694e3, q=1e5, eta=1.0, c=0.0, n_th=None):
    g = p.add_argument_group("oscillator")
    _frequency(g, "omega", "mechanical frequency", omega_hz)
    _frequency(g, "gamma", "mechanical energy decay rate")
    g.add_argument("--q", type=float, default=None, help=f"quality factor Omega/Gamma (default {q:g})")
    g.add_argument("--eta", type=float, default=eta, help="detection efficiency")
    g.add_argument("--n-th", type=float, default=n_th, help="thermal occupancy (overrides --temp-k)")
    g.add_argument("--temp-k", type=float, default=None, help="bath temperature (K, default 300)")
    g.add_argument("--c", type=float, default=None, help=f"cooperativity (default {c:g})")
    _frequency(g, "g", "optomechanical coupling (with --kappa)")
    _frequency(g, "kappa", "optical decay rate (with --g)")
    p.set_defaults(_q_default=q, _c_default=c)


def _params(args) -> OscillatorParams:
    omega = _resolve_frequency(args, "omega")
    if omega is None:
        raise UsageError("omega is required")
    gamma = _resolve_frequency(args, "gamma")
    if gamma is not None and args.q is not None:
        raise UsageError("give either gamma or q, not both")
    if gamma is None:
        q = args._q_default if args.q is None else args.q
        if not q > 0:
            raise UsageError(f"q must be > 0, got {q!r}")
        gamma = omega / q if omega > 0 else 1.0
    g, kappa = _resolve_frequency(args, "g"), _resolve_frequency(args, "kappa")
    bath = {"n_th": args.n_th} if args.n_th is not None else {
        "temperature": 300.0 if args.temp_k is None else args.temp_k}
    if g is not None or kappa is not None:
        if args.c is not None:
            raise UsageError("give either c or (g, kappa), not both")
        coupling = {"g": g, "kappa": kappa}
    else:
        coupling = {"c": args._c_default if args.c is None else args.c}
    return OscillatorParams(omega=omega, gamma=gamma, eta=args.eta, **bath, **coupling)


def _resolved(args) -> dict:
    skip = {"func", "config", "output"}
    out = {k: v for k, v in sorted(vars(args).items()) if not k.startswith("_") and k not in skip}
    if hasattr(args, "_q_default"):
        if out.get("q") is None and out.get("gamma_hz") is None and out.get("gamma_rad_s") is None:
            out["q"] = args._q_default
        if out.get("c") is None and out.get("g_hz") is None and out.get("g_rad_s") is None:
            out["c"] = args._c_default
        if out.get("n_th") is None and out.get("temp_k") is None:
            out["temp_k"] = 300.0
    return out


def _param_meta(params: OscillatorParams) -> dict:
    return {
        "omega_rad_s": params.omega,
        "gamma_rad_s": params.gamma,
        "eta": params.eta,
        "n_th": params.occupancy,
        "c": params.cooperativity,
    }


# ---------------------------------------------------------------------------
# output

@contextmanager
def _sink(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def _emit_json(doc: dict, path):
    with _sink(path) as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _emit_csv(path, meta: dict, header: list[str], rows):
    with _sink(path) as fh:
        for key, value in meta.items():
            text = value if isinstance(value, str) else json.dumps(value, sort_keys=True, default=_json_default)
            fh.write(f"# {key}: {text}\n")
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                          for v in row])


def _meta(args, **extra) -> dict:
    config = _resolved(args)
    return {"command": args.command, "version": __version__, "config": config,
            "config_hash": config_hash(config), **extra}


# ---------------------------------------------------------------------------
# commands

def cmd_derive(args) -> int:
    params = _params(args)
    d = derive(params)
    cov = conditional_covariance(d)
    label = classify(d, cov)
    doc = _meta(args)
    doc.update({
        "derived": d.as_dict(),
        "regime": {"label": label.label.value, "numeral": label.label.numeral, "rwa_valid": label.rwa_valid,
                   "qco": label.qco, "backaction_dominated": label.backaction_dominated},
        "covariance": {"v_qq": cov.v_qq, "v_pp": cov.v_pp, "c_qp": cov.c_qp, "det": cov.det,
                       "v_min": cov.v_min, "theta": cov.theta, "purity": cov.purity},
    })
    _emit_json(doc, args.output)
    return EXIT_OK


def _log_axis(lo, hi, n, name):
    if not (lo > 0 and hi > lo and n >= 2):
        raise UsageError(f"{name} range must satisfy 0 < min < max with >= 2 points")
    return np.geomspace(lo, hi, n)


def _map_rows(q, eta, n_chunk, c_axis):
    nn, cc = np.meshgrid(n_chunk, c_axis, indexing="ij")
    g = covariance_grid(q, nn, eta, cc)
    return [(float(nn[i, j]), float(cc[i, j]), float(g["v_min"][i, j]), float(g["purity"][i, j]),
             float(g["det"][i, j]), g["regime"][i, j], bool(q > nn[i, j]))
            for i in range(nn.shape[0]) for j in range(nn.shape[1])]


def cmd_regime_map(args) -> int:
    n_axis = _log_axis(args.n_th_min, args.n_th_max, args.n_th_points, "n_th")
    c_axis = _log_axis(args.c_min, args.c_max, args.c_points, "c")
    if n_axis.size * c_axis.size > MAX_GRID_POINTS:
        raise UsageError(f"grid of {n_axis.size * c_axis.size} points exceeds {MAX_GRID_POINTS}")
    if not (args.q > 0 and 0 < args.eta <= 1):
        raise UsageError("q must be > 0 and eta in (0, 1]")
    chunks = np.array_split(n_axis, max(1, min(args.workers, n_axis.size)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if args.workers > 1:
            with concurrent.futures.ProcessPoolExecutor(args.workers) as pool:
                parts = list(pool.map(_map_rows, [args.q] * len(chunks), [args.eta] * len(chunks), chunks,
                                      [c_axis] * len(chunks)))
        else:
            parts = [_map_rows(args.q, args.eta, ch, c_axis) for ch in chunks]
    rows = [("grid", *r) for part in parts for r in part]
    curves = boundary_curves(args.q, args.eta, n_axis)
    for name in ("rwa", "i_iii", "ii_v", "iii_iv", "iv_v", "squeezing"):
        for n, c in zip(curves.n_th, getattr(curves, name)):
            if np.isfinite(c):
                rows.append((f"boundary:{name}", n, c, None, None, None, None, None))
    rows.append(("boundary:qco", args.q, None, None, None, None, None, None))
    min_det = min(r[5] for r in rows if r[0] == "grid")
    meta = _meta(args, axes="log-spaced n_th (rows) by C (columns); boundary rows follow the grid",
                 min_det=min_det)
    _emit_csv(args.output, meta, ["kind", "n_th", "c", "v_min", "purity", "det", "regime", "qco"], rows)
    return EXIT_OK


def cmd_variance_curve(args) -> int:
    etas = [float(e) for e in args.eta_list.split(",") if e.strip()]
    if not etas or any(not 0 < e <= 1 for e in etas):
        raise UsageError("eta list must hold values in (0, 1]")
    gamma = _resolve_frequency(args, "gamma")
    if not (gamma and gamma > 0 and args.temp_k > 0 and args.c > 0):
        raise UsageError("gamma, temperature and c must be > 0")
    n_axis = _log_axis(args.n_th_min, args.n_th_max, args.points, "n_th")
    kt_hbar = CONSTANTS.k_B * args.temp_k / CONSTANTS.hbar
    rows = []
    peaks = {e: (0.0, -math.inf) for e in etas}
    for n in n_axis:
        omega = kt_hbar / n
        row = [n, omega, omega / gamma]
        for e in etas:
            d = derive(OscillatorParams(omega=omega, gamma=gamma, eta=e, n_th=n, c=args.c))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                v_full = conditional_covariance(d).v_min
            row += [v_full, rwa_baseline(d)]
            if v_full > peaks[e][1]:
                peaks[e] = (n, v_full)
        rows.append(row)
    header = ["n_th", "omega_rad_s", "q_factor"]
    for e in etas:
        header += [f"v_full_eta{e:g}", f"v_rwa_eta{e:g}"]
    meta = _meta(args, sweep="n_th varied through Omega = k_B T / (hbar n_th) at fixed Gamma",
                 peak_n_th={f"{e:g}": peaks[e][0] for e in etas})
    _emit_csv(args.output, meta, header, rows)
    return EXIT_OK


def cmd_wigner(args) -> int:
    params = _params(args)
    cov = conditional_covariance(derive(params))
    grid = wigner(cov, extent=args.extent, points=args.points)
    e = grid.ellipse
    meta = _meta(args, params=_param_meta(params),
                 ellipse={"semi_major": e.semi_major, "semi_minor": e.semi_minor, "tilt": e.tilt},
                 theta=cov.theta, normalization=grid.integral(),
                 covariance={"v_qq": cov.v_qq, "v_pp": cov.v_pp, "c_qp": cov.c_qp})
    q, p = grid.q_axis, grid.p_axis
    rows = ((q[i], p[j], grid.density[i, j]) for i in range(q.size) for j in range(p.size))
    _emit_csv(args.output, meta, ["q", "p", "w"], rows)
    return EXIT_OK


def _excess_model(args, omega):
    if args.excess_csv and args.pink:
        raise UsageError("give either --excess-csv or --pink")
    if args.excess_csv:
        return ExcessNoiseModel.from_csv(args.excess_csv)
    if args.pink:
        return ExcessNoiseModel.pink(omega, level=args.pink_level, offset=args.pink_offset_rad_s)
    return None


def cmd_filter(args) -> int:
    params = _params(args)
    d = derive(params)
    excess = _excess_model(args, params.omega)
    w = _log_axis(args.omega_min_rad_s or 1e-3 * d.omega_prime, args.omega_max_rad_s or 1e2 * d.omega_prime,
                  args.points, "omega")
    h = position_filter(d)
    hq = h(w)
    hp = momentum_filter(d)(w)
    cov = conditional_covariance(d)
    report = _meta(args, params=_param_meta(params))
    report["coefficients"] = {"a": d.coef_a, "b": d.coef_b, "omega_prime": d.omega_prime,
                              "gamma_prime": d.gamma_prime}
    report["clean"] = {"v_qq": cov.v_qq, "v_pp": cov.v_pp, "c_qp": cov.c_qp, "v_min": cov.v_min}
    header = ["omega_rad_s", "re_h_q", "im_h_q", "abs_h_q", "re_h_p", "im_h_p"]
    cols = [w, hq.real, hq.imag, np.abs(hq), hp.real, hp.imag]
    if excess is not None:
        hx = excess_position_filter(d, excess, w)
        header += ["re_h_q_excess", "im_h_q_excess", "abs_h_q_excess"]
        cols += [hx.real, hx.imag, np.abs(hx)]
        xc = excess_conditional_covariance(d, excess)
        report["excess"] = {"label": excess.label, "v_qq": xc.v_qq, "v_pp": xc.v_pp, "c_qp": xc.c_qp,
                            "v_min": xc.v_min, "dc_level_db": excess.dc_level_db()}
        if args.threshold:
            clean = clean_squeezing_crossing(d.q_factor, d.n_th, d.eta)
            noisy = excess_squeezing_threshold(params, excess)
            report["threshold"] = {"clean_c": clean, "excess_c": noisy, "ratio": noisy / clean,
                                   "assumed_q": d.q_factor, "nominal_ratio": 1.43}
    elif args.threshold:
        report["threshold"] = {"clean_c": clean_squeezing_crossing(d.q_factor, d.n_th, d.eta),
                               "assumed_q": d.q_factor}
    _emit_csv(args.output, {k: v for k, v in report.items()}, header, zip(*cols))
    if args.report:
        _emit_json(report, args.report)
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = _params(args)
    d = derive(params)
    base = SimulationConfig.for_params(d, trajectories=args.trajectories, seed=args.seed)
    cfg = SimulationConfig(
        dt=base.dt if args.dt is None else args.dt,
        duration=base.duration if args.duration is None else args.duration,
        burn_in=base.burn_in if args.burn_in is None else args.burn_in,
        trajectories=args.trajectories,
        seed=args.seed,
        filter_truncation=base.filter_truncation if args.filter_truncation is None else args.filter_truncation,
    )
    cfg.validate(d)
    size = 3 * 8 * cfg.steps * cfg.trajectories
    if size > MAX_RECORD_BYTES:
        raise UsageError(f"record would need {size / 1e9:.1f} GB (> {MAX_RECORD_BYTES / 1e9:g} GB); "
                         "shorten the run or use fewer trajectories")
    record = simulate(d, cfg)
    stats = error_statistics(record, apply_filter(record, position_filter(d)),
                             apply_filter(record, momentum_filter(d)))
    cov = conditional_covariance(d)
    target = {"v_qq": cov.v_qq, "v_pp": cov.v_pp, "c_qp": cov.c_qp}
    se = {"v_qq": stats.se_qq, "v_pp": stats.se_pp, "c_qp": stats.se_qp}
    got = {"v_qq": stats.v_qq, "v_pp": stats.v_pp, "c_qp": stats.c_qp}
    doc = _meta(args, params=_param_meta(params), simulation=cfg.as_dict())
    doc["statistics"] = stats.as_dict()
    doc["analytic"] = target
    doc["relative_error"] = {k: got[k] / target[k] - 1.0 for k in got}
    doc["z_score"] = {k: (got[k] - target[k]) / se[k] for k in got}
    _emit_json(doc, args.output)
    if args.record_csv:
        write_record_csv(record, args.record_csv)
    return EXIT_OK


def cmd_spectra(args) -> int:
    params = _params(args)
    d = derive(params)
    if not d.c > 0:
        raise UsageError("spectra need c > 0")
    w = _log_axis(args.omega_min_rad_s or 1e-3 * d.omega, args.omega_max_rad_s or 1e3 * d.omega_prime,
                  args.points, "omega")
    s_qq = mechanical_spectrum(d)(w).real
    s_yy = measured_spectrum(d)(w).real
    m2 = np.abs(measured_factor(d)(w)) ** 2
    h2 = np.abs(position_filter(d)(w)) ** 2
    _emit_csv(args.output, _meta(args, params=_param_meta(params)),
              ["omega_rad_s", "s_qq", "s_yy", "abs_m_y_sq", "abs_h_q_sq"], zip(w, s_qq, s_yy, m2, h2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="mechsqueeze", description=__doc__.splitlines()[0])
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value file; command-line flags override it")
        p.add_argument("--output", "-o", help="output file (default stdout)")
        p.set_defaults(func=func)
        return p

    p = command("derive", cmd_derive, "derived quantities, covariance and regime as JSON")
    _add_oscillator(p)

    p = command("regime-map", cmd_regime_map, "optimal variance and regime over (n_th, C)")
    p.add_argument("--q", type=float, default=1e5)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--n-th-min", type=float, default=1.0)
    p.add_argument("--n-th-max", type=float, default=1e10)
    p.add_argument("--n-th-points", type=int, default=101)
    p.add_argument("--c-min", type=float, default=1e-2)
    p.add_argument("--c-max", type=float, default=1e12)
    p.add_argument("--c-points", type=int, default=141)
    p.add_argument("--workers", type=int, default=1)

    p = command("variance-curve", cmd_variance_curve, "optimal variance with and without the RWA along n_th")
    p.add_argument("--temp-k", type=float, default=300.0)
    p.add_argument("--c", type=float, default=5e3)
    p.add_argument("--eta-list", default="0.25,0.5,1")
    _frequency(p, "gamma", "mechanical energy decay rate", 3e3)
    p.add_argument("--n-th-min", type=float, default=1.0)
    p.add_argument("--n-th-max", type=float, default=1e9)
    p.add_argument("--points", type=int, default=181)

    p = command("wigner", cmd_wigner, "Wigner function of the conditional state on a grid")
    _add_oscillator(p)
    p.add_argument("--extent", type=float, default=6.0, help="half-width in units of sqrt(v_max)")
    p.add_argument("--points", type=int, default=257)

    p = command("filter", cmd_filter, "optimal filters, optionally with excess photocurrent noise")
    _add_oscillator(p, eta=0.5, c=2.5e5)
    p.add_argument("--excess-csv", help="excess PSD table: omega_rad_s,re[,im] relative to shot noise")
    p.add_argument("--pink", action="store_true", help="builtin pink model level*Omega/(|w| + offset)")
    p.add_argument("--pink-level", type=float, default=0.1)
    p.add_argument("--pink-offset-rad-s", type=float, default=0.1)
    p.add_argument("--threshold", action="store_true", help="also report squeezing cooperativities")
    p.add_argument("--omega-min-rad-s", type=float)
    p.add_argument("--omega-max-rad-s", type=float)
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--report", help="write the JSON report here as well")

    p = command("simulate", cmd_simulate, "Monte Carlo check of the optimal filters")
    _add_oscillator(p, omega_hz=50.0 / TWO_PI, q=50.0, eta=1.0, c=500.0, n_th=100.0)
    p.add_argument("--dt", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--burn-in", type=float)
    p.add_argument("--filter-truncation", type=float)
    p.add_argument("--trajectories", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record-csv", help="write trajectory 0 here")

    p = command("spectra", cmd_spectra, "S_qq, S_YY, |M_Y|^2 and |H|^2 over frequency")
    _add_oscillator(p, c=1e6)
    p.add_argument("--omega-min-rad-s", type=float)
    p.add_argument("--omega-max-rad-s", type=float)
    p.add_argument("--points", type=int, default=400)
    return top


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        extra = _config_argv(sub, read_config(args.config))
        args = parser.parse_args([args.command, *extra, *argv[argv.index(args.command) + 1:]])
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"mechsqueeze: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"mechsqueeze: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
