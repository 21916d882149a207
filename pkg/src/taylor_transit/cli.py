"""Command-line front end.

Every command writes JSON (reports) or CSV (tables, series) with the effective
configuration echoed in a provenance block. Exit codes: 0 success,
2 validation failure, 3 solver failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import centermanifold as cm
from . import dns
from . import fields as fl
from . import linstab as ls
from . import transition as tr
from .params import ParameterError, make_params
from .radial_ops import DiffOperators, ResolutionError, SingularOperatorError, build_gap_grid, build_grid

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

SOLVER_ERRORS = (ls.StabilityError, cm.CenterManifoldError, tr.TransitionError, dns.DNSError,
                 SingularOperatorError, fl.FieldError, np.linalg.LinAlgError)


class ValidationError(ValueError):
    pass


# --- serialization ---------------------------------------------------------------

def _clean(obj):
    """Plain JSON tree; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(doc) -> str:
    # json uses repr for floats, which round-trips exactly
    return json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n"


def provenance(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config", "out", "jobs")}
    return {"toolkit": "taylor-transit", "version": __version__, "command": args.command, "config": cfg}


def _csv_header(args) -> str:
    prov = provenance(args)
    lines = [f"# toolkit={prov['toolkit']} version={prov['version']} command={prov['command']}"]
    lines += [f"# {k}={json.dumps(_clean(v))}" for k, v in prov["config"].items()]
    return "\n".join(lines) + "\n"


def _emit(args, text: str) -> None:
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)


def _emit_json(args, doc: dict) -> None:
    doc = dict(doc)
    doc["provenance"] = provenance(args)
    _emit(args, dumps(doc))


# --- shared helpers --------------------------------------------------------------

def _params(args, taylor=None):
    if args.mu >= 1.0 or not (0.0 < args.eta < 1.0):
        raise ValidationError(f"parameters out of range: eta={args.eta}, mu={args.mu}")
    p = make_params(args.eta, args.mu, taylor)
    if p.rayleigh_stable:
        raise ValidationError(f"Rayleigh-stable regime: mu={args.mu} > eta^2={args.eta**2}; no instability to analyse")
    return p


def _grid(args):
    grid = build_grid(args.eta, args.nr)
    return grid, DiffOperators(grid)


def _critical(args, p, grid, ops):
    return ls.find_critical(p, grid, ops, (args.a_min, args.a_max), args.search_tol)


# --- commands --------------------------------------------------------------------

def cmd_critical(args) -> int:
    if args.narrowgap:
        if not (0.0 <= args.mu < 1.0):
            raise ValidationError("narrow-gap systems need 0 <= mu < 1")
        grid = build_gap_grid(args.nr)
        ops = DiffOperators(grid)
        cpl = ls.narrowgap_coupling(args.mu, grid, args.narrowgap)
        crit = ls.find_critical(None, grid, ops, (args.a_min, args.a_max), args.search_tol, coupling=cpl)
    else:
        p = _params(args)
        grid, ops = _grid(args)
        crit = _critical(args, p, grid, ops)
    doc = crit.as_dict()
    doc["grid"] = grid.metadata()
    _emit_json(args, doc)
    return EXIT_OK


def cmd_growth(args) -> int:
    p = _params(args)
    grid, ops = _grid(args)
    crit = _critical(args, p, grid, ops)
    ratios = args.ratios or [0.9, 0.95, 1.0, 1.05, 1.1]
    rows = []
    for ratio in ratios:
        if ratio <= 0:
            raise ValidationError("Taylor ratios must be positive")
        lam = math.sqrt(ratio * crit.T_c)
        rows.append({"T_ratio": ratio, "T": ratio * crit.T_c, "lambda": lam,
                     "beta1": ls.growth_rate(p, crit.a_c, lam, grid, ops)})
    _emit_json(args, {"critical": crit.as_dict(), "samples": rows, "grid": grid.metadata()})
    return EXIT_OK


def _classify_doc(eta, mu, nr, a_range, search_tol):
    p = make_params(eta, mu)
    res = tr.analyze(p, nr, a_range, search_tol)
    return res.report.as_dict()


def cmd_classify(args) -> int:
    _params(args)
    doc = _classify_doc(args.eta, args.mu, args.nr, (args.a_min, args.a_max), args.search_tol)
    _emit_json(args, doc)
    return EXIT_OK


SWEEP_COLUMNS = ["eta", "mu", "T_c", "a_c", "R", "R_sign", "type",
                 "r0", "d2h_r0", "d2h_eta", "d2h_1", "d_regular", "status"]


def _sweep_row(task):
    eta, mu, nr, a_range, search_tol = task
    row = dict.fromkeys(SWEEP_COLUMNS, "")
    row.update(eta=eta, mu=mu, status="ok")
    if mu >= eta**2:
        row["status"] = "excluded (mu >= eta^2)"
        return row
    try:
        res = tr.analyze(make_params(eta, mu), nr, a_range, search_tol)
        # the nondegeneracy test values are tabulated, never asserted
        r0, d2, dreg = fl.d_regularity(res.mode.h, res.mode.grid, res.ops)
    except Exception as exc:  # per-row failure, the sweep continues
        row["status"] = f"failed: {exc}"
        return row
    rep = res.report
    row.update(T_c=rep.T_c, a_c=rep.a_c, R=res.coefficient.R, type=rep.type,
               R_sign={tr.TYPE_I: "-", tr.TYPE_II: "+"}.get(rep.type, "0"),
               r0=r0, d2h_r0=d2[0], d2h_eta=d2[1], d2h_1=d2[2], d_regular=dreg)
    return row


def _format_cell(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def cmd_sweep(args) -> int:
    etas = np.linspace(args.eta_range[0], args.eta_range[1], args.grid[0])
    mus = np.linspace(args.mu_range[0], args.mu_range[1], args.grid[1])
    if np.any(etas <= 0) or np.any(etas >= 1) or np.any(mus >= 1):
        raise ValidationError("sweep ranges must satisfy 0 < eta < 1 and mu < 1")
    tasks = [(float(e), float(m), args.nr, (args.a_min, args.a_max), args.search_tol) for e in etas for m in mus]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_row, tasks))  # results come back in task order
    else:
        rows = [_sweep_row(t) for t in tasks]
    buf = io.StringIO()
    buf.write(_csv_header(args))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([_format_cell(row[c]) for c in SWEEP_COLUMNS])
    _emit(args, buf.getvalue())
    return EXIT_OK


def _mode_for(args, p, grid, ops):
    crit = _critical(args, p, grid, ops)
    mode = ls.solve_marginal(p, crit.a_c, grid, ops)
    return crit, mode


def cmd_field(args) -> int:
    if args.out in (None, "-"):
        raise ValidationError("field needs --out for the binary snapshot")
    p = _params(args)
    grid, ops = _grid(args)
    crit, mode = _mode_for(args, p, grid, ops)
    if args.T_ratio is None:
        snap = fl.reconstruct_eigenfield(mode, args.z0, args.amplitude, args.nz, ops)
    else:
        adj = ls.solve_adjoint(p, crit.a_c, mode.lambda0, grid, ops)
        corr, coef = cm.transition_coefficient(p, mode, adj, ops)
        beta = ls.growth_rate(p, crit.a_c, math.sqrt(args.T_ratio * crit.T_c), grid, ops)
        snap = fl.secondary_flow(mode, corr, beta, coef.R, args.z0, args.nz, args.with_correction, ops)
    snap.metadata.update({"toolkit_version": __version__, "seed": args.seed})
    fl.write_snapshot(args.out, snap)
    if args.csv:
        fl.export_csv(args.csv, snap)
    return EXIT_OK


def cmd_amplitude(args) -> int:
    if args.R == 0:
        raise ValidationError("R = 0 gives no cubic saturation")
    traj = tr.integrate_reduced(args.x0, args.y0, args.beta1, args.R, args.t_end, args.dt,
                                record_every=args.record_every)
    exact = None
    if args.R < 0:
        exact = tr.closed_form_radius(math.hypot(args.x0, args.y0), args.beta1, args.R, traj.t)
    buf = io.StringIO()
    buf.write(_csv_header(args))
    if traj.escaped:
        buf.write(f"# warning={traj.message}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "y", "radius", "radius_closed_form"])
    for i in range(len(traj.t)):
        w.writerow([_format_cell(traj.t[i]), _format_cell(traj.x[i]), _format_cell(traj.y[i]),
                    _format_cell(traj.radius[i]), "" if exact is None else _format_cell(exact[i])])
    _emit(args, buf.getvalue())
    return EXIT_OK


def cmd_dns(args) -> int:
    p = _params(args)
    grid, ops = _grid(args)
    crit = _critical(args, p, grid, ops)
    cfg = dns.DNSConfig(p.with_taylor(args.T_ratio * crit.T_c), L=crit.L_c, nr=args.nr, nz=args.nz,
                        dt=args.dt, t_end=args.t_end, init=args.init, init_eps=args.init_eps,
                        seed=args.seed, snapshot=args.snapshot, sample_every=args.sample_every,
                        cfl_max=args.cfl_max, dump_path=args.dump, adaptive=args.adaptive)
    state = None
    if args.init == "snapshot":
        if not args.snapshot:
            raise ValidationError("init=snapshot needs --snapshot")
        try:
            snap = fl.read_snapshot(args.snapshot)
        except fl.FieldError as exc:
            raise OSError(str(exc)) from exc
        solver = dns.AxisymmetricSolver(cfg.params, cfg.nr, cfg.nz, cfg.L, cfg.resolved_dt())
        if snap.u_z.shape != (cfg.nr, cfg.nz):
            raise ValidationError("snapshot shape does not match --nr/--nz")
        state = solver.from_physical(snap.u_z, snap.u_r, snap.u_theta)
    res = dns.run(cfg, state)
    _emit(args, _csv_header(args) + res.series.to_csv())
    if args.final:
        fl.write_snapshot(args.final, res.final)
    return EXIT_OK


def cmd_ek(args) -> int:
    p = _params(args)
    grid, ops = _grid(args)
    _, mode = _mode_for(args, p, grid, ops)
    if args.profile == "h":
        prof = mode.h
    elif args.profile == "Dstar_h":
        prof = ops.apply("Dstar", mode.h)
    else:
        prof = np.loadtxt(args.profile, ndmin=1)
        if prof.shape != (grid.size,):
            raise ValidationError(f"profile must hold {grid.size} values on the radial nodes")
    dec = fl.ek_decompose(prof, grid, args.n_modes, ops)
    _emit_json(args, {"decomposition": dec.as_dict(), "profile": args.profile, "grid": grid.metadata()})
    return EXIT_OK


def read_table(path) -> tuple[dict, list[dict]]:
    """CSV with '# key=value' provenance comments; returns (header, rows)."""
    header, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            header[k] = v
        elif line.strip():
            lines.append(line)
    return header, list(csv.DictReader(lines))


def _num(v):
    try:
        return float(v)
    except ValueError:
        return v if v != "" else None


def cmd_plotdata(args) -> int:
    header, rows = read_table(args.table)
    cols = list(rows[0].keys()) if rows else []
    data = {c: [_num(r[c]) for r in rows] for c in cols}
    _emit_json(args, {"source": str(args.table), "source_header": header, "columns": cols, "data": data})
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------------

def _add_common(sp, nr=64):
    sp.add_argument("--eta", type=float, default=0.9, help="radius ratio r1/r2")
    sp.add_argument("--mu", type=float, default=0.0, help="rotation ratio Omega2/Omega1")
    sp.add_argument("--nr", type=int, default=nr, help="radial collocation points")
    sp.add_argument("--a-min", type=float, default=1.0, help="scan start, gap-scaled wavenumber")
    sp.add_argument("--a-max", type=float, default=8.0, help="scan end, gap-scaled wavenumber")
    sp.add_argument("--search-tol", type=float, default=1e-6)
    sp.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taylor-transit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="key=value file; command-line flags take precedence")
        sp.add_argument("--out", default=None, help="output path (stdout when omitted)")
        sp.add_argument("--jobs", type=int, default=int(os.environ.get("TAYLOR_TRANSIT_JOBS", "1")))
        sp.set_defaults(func=func)
        return sp

    sp = command("critical", cmd_critical, "critical Taylor number and wavenumber")
    _add_common(sp)
    sp.add_argument("--narrowgap", choices=["symmetric", "full"], default=None,
                    help="solve the planar narrow-gap system instead of the annulus")

    sp = command("growth", cmd_growth, "leading growth rate at multiples of T_c")
    _add_common(sp)
    sp.add_argument("--ratios", type=float, nargs="+", default=None, help="T/T_c values")

    sp = command("classify", cmd_classify, "transition coefficient and classification")
    _add_common(sp)

    sp = command("sweep", cmd_sweep, "regime map over an (eta, mu) grid")
    _add_common(sp, nr=48)
    sp.add_argument("--eta-range", type=float, nargs=2, default=[0.9, 0.98])
    sp.add_argument("--mu-range", type=float, nargs=2, default=[0.0, 0.5])
    sp.add_argument("--grid", type=int, nargs=2, default=[3, 3], metavar=("N_ETA", "N_MU"))

    sp = command("field", cmd_field, "eigenfield or bifurcated-flow snapshot")
    _add_common(sp)
    sp.add_argument("--nz", type=int, default=64)
    sp.add_argument("--z0", type=float, default=0.0, help="axial phase")
    sp.add_argument("--amplitude", type=float, default=1.0)
    sp.add_argument("--T-ratio", type=float, default=None, help="T/T_c for the bifurcated flow")
    sp.add_argument("--with-correction", action="store_true", help="add the quadratic correction")
    sp.add_argument("--csv", default=None, help="also export the snapshot as CSV")

    sp = command("amplitude", cmd_amplitude, "integrate the truncated amplitude equations")
    sp.add_argument("--beta1", type=float, required=False, default=1.0)
    sp.add_argument("--R", type=float, required=False, default=-1.0)
    sp.add_argument("--x0", type=float, default=0.1)
    sp.add_argument("--y0", type=float, default=0.0)
    sp.add_argument("--t-end", type=float, default=10.0)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--record-every", type=int, default=10)

    sp = command("dns", cmd_dns, "axisymmetric direct simulation")
    _add_common(sp)
    sp.add_argument("--nz", type=int, default=64)
    sp.add_argument("--T-ratio", type=float, default=1.05)
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--t-end", type=float, default=0.01)
    sp.add_argument("--init", choices=["eigen", "random", "snapshot"], default="eigen")
    sp.add_argument("--init-eps", type=float, default=1e-3)
    sp.add_argument("--snapshot", default=None, help="initial snapshot for init=snapshot")
    sp.add_argument("--sample-every", type=int, default=10)
    sp.add_argument("--cfl-max", type=float, default=0.5)
    sp.add_argument("--adaptive", action="store_true", help="halve dt instead of aborting on CFL")
    sp.add_argument("--dump", default=None, help="state dump path on abort")
    sp.add_argument("--final", default=None, help="write the final field snapshot here")

    sp = command("ek", cmd_ek, "decomposition onto the Dirichlet radial modes")
    _add_common(sp)
    sp.add_argument("--profile", default="h", help="'h', 'Dstar_h' or a text file of nodal values")
    sp.add_argument("--n-modes", type=int, default=8)

    sp = command("plotdata", cmd_plotdata, "plot-ready JSON columns from a CSV table")
    sp.add_argument("table", help="CSV written by sweep, amplitude or dns")
    return parser


def read_config(path) -> dict:
    out = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"{path}:{ln}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(parser, argv, args):
    """Re-parse with config-file values installed as defaults (flags still win)."""
    cfg = read_config(args.config)
    sp = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, raw in cfg.items():
        act = actions.get(key)
        if act is None or key in ("func", "config", "help"):
            raise ValidationError(f"unknown config key {key!r} for {args.command}")
        if act.nargs in ("+", "*") or isinstance(act.nargs, int):
            vals = raw.replace(",", " ").split()
            defaults[key] = [act.type(v) if act.type else v for v in vals]
        elif act.const is True and act.nargs == 0:
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = act.type(raw) if act.type else raw
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    try:
        if getattr(args, "config", None):
            args = _apply_config(parser, argv, args)
        if getattr(args, "jobs", 1) < 1:
            raise ValidationError("--jobs must be at least 1")
        return args.func(args)
    except (ValidationError, ParameterError, ResolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
