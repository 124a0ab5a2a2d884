"""Command-line front end.

Every subcommand reads the flat configuration (``--config``), applies its
flag overrides, runs one experiment and writes CSV/JSON outputs atomically
under ``--out-dir`` together with an echo of the effective configuration.
A JSON summary, including wall time, goes to stdout only, so output files
are byte-identical across runs and worker counts.

Exit codes: 0 success, 2 acceptance failure, 3 numeric accuracy failure,
4 configuration or contract error.
"""

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import acceptance
from . import characteristics as ch
from .config import defaults, emit_config, parse_config
from .dispersion import PenroseGrid, penrose_margin
from .equilibria import profile_from_config
from .errors import AccuracyError, ConfigError, ContractError, LandauError
from .linear import density_decay_reports, density_norm_table, linear_evolve, radial_field_history
from .nonlinear import (NonlinearProblem, bootstrap_monitor, density_norms, picard_loop,
                        relative_l2_difference, semi_lagrangian_reference)
from .parallel import set_max_workers
from .periodic import PeriodicBox, PhaseGrid
from .reconstruct import g_decay_reports, g_kernel_norms
from .transport import GaussianPhaseDensity
from .volterra import TimeGrid, default_modes, mode_sweep, resolvent_mode, series_from_csv, series_to_csv

EXIT_OK, EXIT_ACCEPT, EXIT_ACCURACY, EXIT_CONFIG = 0, 2, 3, 4
CONFIG_ECHO = "effective_config.txt"


# ------------------------------------------------------------------ output


def _json_value(obj):
    if isinstance(obj, dict):
        return {str(k): _json_value(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_json_value(v) for v in (obj.tolist() if isinstance(obj, np.ndarray) else obj)]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    return obj


def dumps(obj):
    """Deterministic JSON; Python floats already print in round-trip form."""
    return json.dumps(_json_value(obj), sort_keys=True, indent=2) + "\n"


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


class Outputs:
    """Atomic writer rooted at the output directory."""

    def __init__(self, root):
        self.root = root
        self.written = []

    def path(self, name):
        return name if os.path.isabs(name) else os.path.join(self.root, name)

    def check(self, names):
        """Fail before any computation if a target directory is not writable."""
        for name in names:
            d = os.path.dirname(os.path.abspath(self.path(name)))
            if not os.path.isdir(d):
                try:
                    os.makedirs(d, exist_ok=True)
                except OSError as exc:
                    raise ContractError(f"cannot create output directory {d}: {exc}") from None
            if not os.access(d, os.W_OK):
                raise ContractError(f"output directory {d} is not writable")

    def write(self, name, text):
        target = self.path(name)
        d = os.path.dirname(os.path.abspath(target))
        try:
            fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(target))
        except OSError as exc:
            raise ContractError(f"cannot write {target}: {exc}") from None
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.written.append(target)


# ----------------------------------------------------------------- helpers


def _profile(cfg):
    return profile_from_config(cfg["equilibrium.dimension"], cfg["equilibrium.kind"],
                               cfg["equilibrium.theta"], cfg["equilibrium.bump.u"],
                               cfg["equilibrium.bump.alpha"], cfg["equilibrium.bump.theta1"],
                               cfg["equilibrium.bump.theta2"])


def _initial(cfg):
    amp = 0.0 if cfg["initial.kind"] == "zero" else cfg["initial.amplitude"]
    return GaussianPhaseDensity(cfg.dimension, cfg["initial.sigma_x"], cfg["initial.sigma_v"], amp)


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ContractError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _pair(text, kind, what):
    parts = text.split(":")
    if len(parts) != 2:
        raise ContractError(f"{what} expects a:b, got {text!r}")
    try:
        return kind(parts[0]), kind(parts[1])
    except ValueError:
        raise ContractError(f"{what} expects a:b, got {text!r}") from None


def _times(args, t_max):
    times = np.geomspace(10.0, min(100.0, t_max), 12) if args.t_list is None else np.array(_float_list(args.t_list))
    if np.any(times < 0) or np.any(times > t_max + 1e-12):
        raise ContractError(f"requested times must lie in [0, {t_max}]")
    return np.sort(times)


def _fit_rows(table, window):
    if window is None:
        return table
    lo, hi = _pair(window, float, "--fit-window")
    return table[(table[:, 0] >= lo) & (table[:, 0] <= hi)]


def _fits(table, window, fitter):
    rows = _fit_rows(table, window)
    rows = rows[rows[:, 0] >= 1.0]
    if rows.shape[0] < 8:
        return {"skipped": "decay fits need at least 8 times with t >= 1 in the fit window"}
    return {k: r.to_dict() for k, r in fitter(rows).items()}


# ------------------------------------------------------------- experiments


def run_penrose(cfg, args, out):
    grid = PenroseGrid(gamma_max=cfg["penrose.gamma_max"], tau_max=cfg["penrose.tau_max"],
                       xi_max=cfg["penrose.xi_max"], n=cfg["penrose.n"], refine=cfg["penrose.refine"])
    out.check([args.out])
    scan = penrose_margin(_profile(cfg), grid)
    out.write(args.out, dumps(scan.to_dict()))
    return {"margin": scan.margin, "status": scan.status, "winding": scan.winding}, EXIT_OK


def run_kernel_decay(cfg, args, out):
    d = cfg.dimension
    t_max = cfg.get("solver.t_max", 100.0)
    names = [args.out, args.report] + ([args.modes_out] if args.modes_out else [])
    out.check(names)
    times = _times(args, t_max)
    if args.modes_in:
        with open(args.modes_in) as fh:
            kernel = series_from_csv(fh.read(), "Kernel")
        t_max = kernel.grid.t_max
    else:
        grid = TimeGrid(t_max, cfg.get("solver.steps", 2000))
        kernel = mode_sweep(_profile(cfg), grid, default_modes(cfg["solver.modes"]))
    G = resolvent_mode(kernel)
    table = np.array(g_kernel_norms(G, d, times, tol=cfg["solver.tol"]))
    reports = _fits(table, args.fit_window, lambda rows: g_decay_reports(rows, d))
    out.write(args.out, csv_text(["t", "l1", "linf", "grad_l1", "grad_linf"], table))
    out.write(args.report, dumps(reports))
    if args.modes_out:
        out.write(args.modes_out, series_to_csv(G))
    summary = {k: v.get("exponent") for k, v in reports.items() if isinstance(v, dict)}
    return summary, EXIT_OK


def run_linear_evolve(cfg, args, out):
    d = cfg.dimension
    t_max = cfg.get("solver.t_max", 100.0)
    names = [args.out, args.report] + [n for n in (args.modes_out, args.field_history_out) if n]
    out.check(names)
    times = _times(args, t_max)
    run = linear_evolve(_profile(cfg), _initial(cfg), t_max, cfg.get("solver.steps", 2000),
                        modes=default_modes(cfg["solver.modes"]))
    table = density_norm_table(run, times, tol=cfg["solver.tol"])
    reports = _fits(table, args.fit_window, lambda rows: density_decay_reports(rows, d))
    out.write(args.out, csv_text(["t", "l1", "linf", "grad_l1", "grad_linf"], table))
    out.write(args.report, dumps(reports))
    if args.modes_out:
        out.write(args.modes_out, series_to_csv(run.density))
    if args.field_history_out:
        fh = radial_field_history(run, dt_field=args.dt_field, tol=cfg["solver.tol"])
        rows = [(t, r, e) for t, es in zip(fh.times, fh.e) for r, e in zip(fh.radii, es)]
        out.write(args.field_history_out, csv_text(["t", "r", "e"], rows))
    summary = {k: v.get("exponent") for k, v in reports.items() if isinstance(v, dict)}
    return summary, EXIT_OK


def _phase_grid(cfg):
    box = PeriodicBox(cfg["domain.L"], cfg["domain.nx"], cfg.dimension)
    return PhaseGrid(box, cfg["domain.vmax"], cfg["domain.nv"])


def run_nonlinear_evolve(cfg, args, out):
    if cfg.dimension not in (1, 2):
        raise ConfigError("nonlinear grid path supports d in {1, 2}")
    grid = _phase_grid(cfg)
    t_max = cfg.get("solver.t_max", 20.0)
    steps = cfg.get("solver.steps", 400)
    out.check([args.out_density, args.out_monitor])
    f0 = _initial(cfg)
    profile = _profile(cfg)
    problem = NonlinearProblem(grid, f0, profile, t_max, steps)
    max_picard = cfg["solver.max_picard"] if args.max_picard is None else args.max_picard
    tol = cfg["solver.picard_tol"] if args.picard_tol is None else args.picard_tol
    state = picard_loop(problem, max_picard, tol)
    norms = density_norms(grid, state.rho)
    mon = bootstrap_monitor(problem.times, norms, grid.dimension, cfg["solver.epsilon"])
    monitor = mon.to_dict()
    monitor["picard_residuals"] = list(state.residuals)
    summary = {"picard_iterations": state.n, "final_residual": state.residual,
               "breach_time": mon.breach_time}
    if args.twin:
        sl = semi_lagrangian_reference(f0, profile, grid, t_max, steps)
        rel = relative_l2_difference(state.rho, sl.rho)
        monitor["twin_relative_l2"] = list(rel)
        summary["twin_max_relative_l2"] = float(np.max(rel))
    xs = [m.ravel() for m in grid.box.mesh()]
    rows = [(t, *[x[i] for x in xs], r) for t, rho in zip(problem.times, state.rho)
            for i, r in enumerate(rho.ravel())]
    header = ["t", "x", "rho"] if grid.dimension == 1 else ["t", "x1", "x2", "rho"]
    out.write(args.out_density, csv_text(header, rows))
    out.write(args.out_monitor, dumps(monitor))
    code = EXIT_OK if state.residual < tol else EXIT_ACCURACY
    return summary, code


def read_field_history(path, cfg):
    """``t,r,e`` rows give a radial history; ``t,x,e`` (d = 1) a periodic one."""
    with open(path) as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ContractError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ContractError("field history CSV needs three columns")
    times = np.unique(data[:, 0])
    n = data.shape[0] // times.size
    if n * times.size != data.shape[0]:
        raise ContractError("field history rows are not a full time x space product")
    space = data[:n, 1]
    values = data[:, 2].reshape(times.size, n)
    if header == ["t", "r", "e"]:
        return ch.RadialFieldHistory(cfg.dimension, times, space, values)
    if header == ["t", "x", "e"]:
        dx = space[1] - space[0]
        box = PeriodicBox(n * dx, n, 1)
        if not np.allclose(space, box.x, atol=1e-9 * n * dx):
            raise ContractError("periodic field history needs x on [-L/2, L/2) with uniform spacing")
        return ch.PeriodicFieldHistory(box, times, values[:, None, :])
    raise ContractError("field history CSV header must be t,r,e or t,x,e")


def run_characteristics(cfg, args, out):
    out.check([args.out])
    if args.field_history:
        field = read_field_history(args.field_history, cfg)
    else:
        field = ch.zero_field(cfg.dimension)
    d = field.dimension
    nx, nv = _pair(args.grid, int, "--grid") if args.grid else (cfg["domain.nx"], cfg["domain.nv"])
    half = 0.5 * cfg["domain.L"]
    xs = -half + (2 * half / nx) * np.arange(nx)
    vs = -cfg["domain.vmax"] + (2 * cfg["domain.vmax"] / nv) * np.arange(nv)
    X1, V1 = np.meshgrid(xs, vs, indexing="ij")
    x = np.zeros((X1.size, d))
    v = np.zeros((X1.size, d))
    x[:, 0] = X1.ravel()
    v[:, 0] = V1.ravel()
    fm = ch.flow(field, args.s, args.t, x, v)
    st = ch.straighten(field, args.s, args.t, x, v, det=True)
    if d == 1:
        header = ["x", "v", "Yx", "Wv", "detPsi"]
    else:
        idx = range(1, d + 1)
        header = ([f"x{i}" for i in idx] + [f"v{i}" for i in idx] + [f"Yx{i}" for i in idx]
                  + [f"Wv{i}" for i in idx] + ["detPsi"])
    rows = np.column_stack([x, v, fm.Y, fm.W, st.det_grad_psi])
    out.write(args.out, csv_text(header, rows))
    return {"points": int(x.shape[0]), "sup_Y": float(np.max(np.abs(fm.Y))),
            "sup_W": float(np.max(np.abs(fm.W))),
            "straightening_converged_fraction": st.converged_fraction}, EXIT_OK


def run_accept(cfg, args, out):
    out.check([args.out])
    which = [int(x) for x in _float_list(args.only)] if args.only else None
    if which and any(n not in acceptance.CRITERIA for n in which):
        raise ContractError("criteria are numbered 1 to 10")
    results = acceptance.run_all(which, seed=cfg["seed"], callback=lambda r: print(r.line(), flush=True))
    report = []
    for r in results:
        item = r.to_dict()
        item.pop("runtime")
        report.append(item)
    out.write(args.out, dumps(report))
    passed = all(r.passed for r in results)
    return {"passed": passed, "failed": [r.number for r in results if not r.passed]}, \
        EXIT_OK if passed else EXIT_ACCEPT


RUNNERS = {"penrose": run_penrose, "kernel-decay": run_kernel_decay,
           "linear-evolve": run_linear_evolve, "nonlinear-evolve": run_nonlinear_evolve,
           "characteristics": run_characteristics, "accept": run_accept}


# -------------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="screened-landau", description=__doc__.split("\n")[0])
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--threads", type=int, help="cap on worker threads")
    p.add_argument("--seed", type=int, help="seed for randomized suites")
    p.add_argument("--out-dir", help="directory for all relative output paths")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("penrose", help="Penrose stability margin scan")
    s.add_argument("--gamma-max", type=float)
    s.add_argument("--tau-max", type=float)
    s.add_argument("--xi-max", type=float)
    s.add_argument("--grid", type=int, help="points per axis")
    s.add_argument("--refine", type=int, help="refinement levels")
    s.add_argument("--out", default="report.json")

    for name, helptext in (("kernel-decay", "resolvent kernel norms and decay fits"),
                           ("linear-evolve", "linearized density evolution")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--t-list", help="comma-separated output times")
        s.add_argument("--fit-window", help="t_lo:t_hi")
        s.add_argument("--out", default="decay.csv" if name == "kernel-decay" else "density.csv")
        s.add_argument("--report", default="decay.json")
        s.add_argument("--modes-out", help="write the mode series as t,xi,re,im CSV")
        if name == "kernel-decay":
            s.add_argument("--modes-in", help="read a Kernel mode series instead of tabulating it")
        else:
            s.add_argument("--field-history-out", help="write the field history as t,r,e CSV")
            s.add_argument("--dt-field", type=float, default=0.5)

    s = sub.add_parser("nonlinear-evolve", help="Picard iteration on a periodic phase grid")
    s.add_argument("--max-picard", type=int)
    s.add_argument("--picard-tol", type=float)
    s.add_argument("--out-density", default="density.csv")
    s.add_argument("--out-monitor", default="monitor.json")
    s.add_argument("--twin", action="store_true", help="also run the semi-Lagrangian reference")

    s = sub.add_parser("characteristics", help="flow map and straightening on a phase grid")
    s.add_argument("--field-history", help="t,r,e or t,x,e CSV (default: zero field)")
    s.add_argument("--s", type=float, default=0.0)
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--grid", help="nx:nv")
    s.add_argument("--out", default="flowmap.csv")

    s = sub.add_parser("accept", help="run the acceptance suite")
    s.add_argument("--only", help="comma-separated criterion numbers")
    s.add_argument("--out", default="acceptance.json")
    return p


def effective_config(args):
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = parse_config(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from None
    else:
        cfg = defaults()
    updates = {"experiment": args.command}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out_dir is not None:
        updates["output__dir"] = args.out_dir
    if args.command == "penrose":
        for flag, key in (("gamma_max", "penrose__gamma_max"), ("tau_max", "penrose__tau_max"),
                          ("xi_max", "penrose__xi_max"), ("grid", "penrose__n"),
                          ("refine", "penrose__refine")):
            if getattr(args, flag) is not None:
                updates[key] = getattr(args, flag)
    return cfg.replace(**updates)


def run_experiment(cfg, args):
    """Dispatch one experiment; returns ``(summary, exit_code)``."""
    out = Outputs(cfg["output.dir"])
    out.check([CONFIG_ECHO])
    t0 = time.perf_counter()
    summary, code = RUNNERS[cfg["experiment"]](cfg, args, out)
    out.write(CONFIG_ECHO, emit_config(cfg))
    summary = {"experiment": cfg["experiment"], "exit_code": code, "outputs": out.written,
               "wall_time": time.perf_counter() - t0, "metrics": summary}
    return summary, code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be positive")
            set_max_workers(args.threads)
        cfg = effective_config(args)
        summary, code = run_experiment(cfg, args)
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AccuracyError as exc:
        print(f"accuracy failure: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    except LandauError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    sys.stdout.write(dumps(summary))
    return code


if __name__ == "__main__":
    sys.exit(main())
