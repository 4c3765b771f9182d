"""Command-line entry point: ``otemachine <command> [--config FILE] [--set key=value ...]``.

Exit codes
    0  success
    2  configuration error (bad file, schema, values)
    3  solver or physics failure
    4  validation failure (first failing invariant named on stderr)
    5  fewer than 90% of scan/sample cells succeeded

Errors are reported as one JSON object on standard error; nothing is written
to the output path unless the command completes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__, units
from .analysis import (
    carnot_for,
    evaluate,
    isolated_machine_theta,
    law_checks,
    maximize_power,
    sample_machines,
    scan_phase_diagram,
)
from .config import (
    build_environment,
    build_sample,
    build_scan_grids,
    build_solver,
    build_system,
    load_config,
    public_view,
    workers,
)
from .dynamics import default_t_final, density_matrix_to_json, evolve_trajectory, gibbs_state, trace_distance
from .errors import (
    CarnotUnavailable,
    ConfigError,
    ConstraintViolation,
    DomainError,
    NotRefrigerating,
    OteError,
    StepTooLarge,
    UnphysicalAlpha,
)
from .thermo import _json_safe

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VALIDATION, EXIT_CELLS = 0, 2, 3, 4, 5
CELL_SUCCESS_FRACTION = 0.9

# sample outcomes that are physics answers rather than failures
SAMPLE_ANSWERS = {"ok", "NoRefrigerationWindow", "OrderingViolation", "NonlocalFluxSign", "NotRefrigerating"}


class CommandFailed(Exception):
    def __init__(self, code, payload):
        super().__init__(payload.get("message", ""))
        self.code = code
        self.payload = payload


def _dumps(obj) -> str:
    return json.dumps(_json_safe(obj), indent=2, allow_nan=False) + "\n"


def _emit(text: str, path):
    """Write the whole artifact at once (atomic rename for files)."""
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".otemachine-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _progress(msg):
    sys.stderr.write(f"[otemachine] {msg}\n")
    sys.stderr.flush()


def _fmt_choice(cfg, default, allowed):
    fmt = cfg["output"].get("format") or default
    if fmt not in allowed:
        raise ConfigError(f"output.format {fmt!r} not supported here (choose from {', '.join(allowed)})")
    return fmt


def _kelvin_block(report):
    conv = units.to_kelvin
    return {
        "theta": {k: conv(v) for k, v in report.theta.items()},
        "env_temps": {k: (None if v is None else conv(v)) for k, v in report.env_temps.items()},
        "kelvin_per_unit": units.KELVIN_PER_UNIT,
    }


def _task_json(task):
    return {"label": task.label.value, "theta_b": task.theta_b, "t_b": task.t_b, "margin": task.margin}


# -- commands -------------------------------------------------------------------


def run_steady(cfg):
    system, env = build_system(cfg), build_environment(cfg, "steady")
    ev = evaluate(system, env)
    rep = ev.report
    out = {
        "command": "steady",
        "version": __version__,
        "config": public_view(cfg),
        "report": rep.to_json(),
        "task": _task_json(ev.task),
        "solver_residual": ev.state.residual,
        "rho": density_matrix_to_json(ev.state.rho),
        "diagnostics": {"isolated_machine_theta": isolated_machine_theta(system, env)},
    }
    try:
        cr = carnot_for(ev)
        out["efficiency"] = {"eta": cr.eta, "eta_c": cr.eta_c, "branch": cr.branch, "ratio": cr.ratio}
    except (NotRefrigerating, CarnotUnavailable) as exc:
        out["efficiency"] = {"status": f"{type(exc).__name__}: {exc}"}
    if cfg["output"].get("kelvin", True):
        out["kelvin"] = _kelvin_block(rep)
    fmt = _fmt_choice(cfg, "json", ("json", "csv"))
    if fmt == "json":
        return _dumps(out), EXIT_OK
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("quantity", "value"))
    for name in ("q_b", "q_1", "q_2", "q_3", "q_d", "q_d_body", "q_r", "first_law_residual", "entropy_production"):
        w.writerow((name, repr(getattr(rep, name))))
    for k, v in rep.theta.items():
        w.writerow((f"theta_{k}", repr(v)))
    w.writerow(("c_r_re", repr(rep.c_r.real)))
    w.writerow(("c_r_im", repr(rep.c_r.imag)))
    w.writerow(("label", ev.task.label.value))
    return buf.getvalue(), EXIT_OK


def run_validate(cfg):
    system, env = build_system(cfg), build_environment(cfg, "validate")
    solver = build_solver(cfg)
    ev = evaluate(system, env)
    checks = law_checks(ev, residual_tolerance=solver.tolerance)
    failed = [c for c in checks if c.status == "fail"]
    out = {
        "command": "validate",
        "version": __version__,
        "config": public_view(cfg),
        "passed": not failed,
        "checks": [
            {"name": c.name, "status": c.status, "value": c.value, "threshold": c.threshold, "detail": c.detail}
            for c in checks
        ],
    }
    text = _dumps(out)
    if failed:
        first = failed[0]
        raise CommandFailed(EXIT_VALIDATION, {
            "error": "ValidationFailure",
            "invariant": first.name,
            "message": f"invariant {first.name!r} failed: value {first.value!r} > threshold {first.threshold!r}"
                       + (f" ({first.detail})" if first.detail else ""),
            "report": out,
        })
    return text, EXIT_OK


def run_scan(cfg):
    system, env = build_system(cfg), build_environment(cfg, "scan")
    z, dt = build_scan_grids(cfg)
    _fmt_choice(cfg, "csv", ("csv",))
    n = len(z) * len(dt)
    _progress(f"scan: {len(z)} x {len(dt)} = {n} cells")
    pd = scan_phase_diagram(system, env, z, dt, workers=workers(cfg))
    labels = {}
    for c in pd.cells:
        labels[c.label] = labels.get(c.label, 0) + 1
    _progress(f"scan: done, {json.dumps(dict(sorted(labels.items())))}, success {pd.success_fraction:.3f}")
    code = EXIT_OK if pd.success_fraction >= CELL_SUCCESS_FRACTION else EXIT_CELLS
    return pd.to_csv(kelvin=cfg["output"].get("kelvin", True)), code


def run_sample(cfg):
    env = build_environment(cfg, "sample")
    n, seed, grid, ranges = build_sample(cfg)
    r = float(cfg["system"].get("r", 1.0))
    _fmt_choice(cfg, "csv", ("csv",))
    _progress(f"sample: n={n}, seed={seed}, grid={grid}")
    study = sample_machines(n, ranges, seed, environment=env, r=r, grid=grid, workers=workers(cfg))
    summary = study.summary()
    _progress(f"sample: done, {json.dumps(summary['status_counts'])}")
    extras = [(text, cfg["output"].get(key)) for key, text in (("summary", _dumps(summary)), ("draws", study.draws_csv()))]
    failures = sum(v for k, v in summary["status_counts"].items() if k not in SAMPLE_ANSWERS)
    code = EXIT_OK if (n - failures) / n >= CELL_SUCCESS_FRACTION else EXIT_CELLS
    return study.histogram_csv(), code, [e for e in extras if e[1]]


def run_optimize(cfg):
    system, env = build_system(cfg), build_environment(cfg, "optimize")
    opt_cfg = cfg["optimize"]
    grid = opt_cfg.get("grid", 64)
    if isinstance(grid, bool) or not isinstance(grid, int) or grid < 2:
        raise ConfigError("optimize.grid must be an integer >= 2")
    _fmt_choice(cfg, "csv", ("csv",))
    opt = maximize_power(system.body, env, system.geometry, grid=grid, annotate_trace=bool(opt_cfg.get("annotate", True)))
    summary = {
        "omega1": opt.omega1, "omega3": opt.omega3, "q_r_max": opt.q_r_max,
        "eta": opt.eta, "eta_c": opt.eta_c, "branch": opt.branch, "carnot_ratio": opt.carnot_ratio,
        "status": opt.status,
    }
    _progress(f"optimize: {json.dumps(_json_safe(summary))}")
    extras = [(_dumps(summary), cfg["output"]["summary"])] if cfg["output"].get("summary") else []
    return opt.trace_csv(), EXIT_OK, extras


def _initial_state(kind, ev):
    dim = ev.state.rho.shape[0]
    if kind == "ground":
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        return rho
    if kind == "mixed":
        return np.eye(dim, dtype=complex) / dim
    if kind == "gibbs_w":
        return gibbs_state(ev.liouvillian.h_body + ev.liouvillian.h_machine, ev.environment.t_w).astype(complex)
    raise ConfigError(f"evolve.initial must be 'ground', 'mixed' or 'gibbs_w', got {kind!r}")


def run_evolve(cfg):
    system, env = build_system(cfg), build_environment(cfg, "evolve")
    solver = build_solver(cfg)
    ev = evaluate(system, env)
    rho0 = _initial_state(cfg["evolve"].get("initial", "ground"), ev)
    t_final = solver.t_final if solver.t_final is not None else default_t_final(ev.liouvillian)
    traj = evolve_trajectory(ev.liouvillian, rho0, t_final, solver.dt, solver.samples)
    rows = []
    for t, rho in traj:
        herm = 0.5 * (rho + rho.conj().T)
        rows.append({
            "t": t,
            "trace": float(np.trace(rho).real),
            "min_eigenvalue": float(np.linalg.eigvalsh(herm)[0]),
            "distance_to_steady": trace_distance(herm, ev.state.rho),
            "p_e": float(np.einsum("ambm->ab", herm.reshape(2, 3, 2, 3))[1, 1].real),
        })
    fmt = _fmt_choice(cfg, "json", ("json", "csv"))
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ("t", "trace", "min_eigenvalue", "distance_to_steady", "p_e")
        w.writerow(cols)
        for row in rows:
            w.writerow([repr(row[c]) for c in cols])
        return buf.getvalue(), EXIT_OK
    out = {
        "command": "evolve",
        "version": __version__,
        "config": public_view(cfg),
        "t_final": t_final,
        "trajectory": rows,
        "final_rho": density_matrix_to_json(traj[-1][1]),
        "steady_rho": density_matrix_to_json(ev.state.rho),
    }
    return _dumps(out), EXIT_OK


COMMANDS = {
    "steady": run_steady,
    "validate": run_validate,
    "scan": run_scan,
    "sample": run_sample,
    "evolve": run_evolve,
    "optimize": run_optimize,
}

CONFIG_ERRORS = (ConfigError, DomainError, ConstraintViolation, UnphysicalAlpha, StepTooLarge)


def build_parser():
    p = argparse.ArgumentParser(prog="otemachine", description="Absorption machine in a two-temperature field.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "steady": "stationary state, heat currents and task label (JSON)",
        "validate": "run the invariant suite on one configuration",
        "scan": "phase diagram over (z, dT) (CSV)",
        "sample": "random refrigerators, histogram of eta_m/eta_C (CSV)",
        "evolve": "RK4 time evolution towards the stationary state",
        "optimize": "maximise the resonant current over omega_1 (trace CSV)",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("-c", "--config", help="JSON configuration file")
        sp.add_argument("-o", "--output", help="output path (default: standard output)")
        sp.add_argument("--format", choices=("json", "csv"), help="output format")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration value, e.g. environment.t_s_kelvin=250")
        sp.add_argument("--workers", type=int, help="worker processes for scan/sample")
        if name == "sample":
            sp.add_argument("--n", type=int, help="number of draws")
            sp.add_argument("--seed", type=int, help="random seed")
            sp.add_argument("--summary", help="also write the JSON summary here")
            sp.add_argument("--draws", help="also write the per-draw CSV here")
        if name == "optimize":
            sp.add_argument("--summary", help="also write the optimum as JSON here")
    return p


def _flag_overrides(args):
    out = list(args.set)
    if args.output is not None:
        out.append(f"output.path={json.dumps(args.output)}")
    if args.format is not None:
        out.append(f"output.format={json.dumps(args.format)}")
    if args.workers is not None:
        out.append(f"workers={args.workers}")
    for name in ("n", "seed"):
        if getattr(args, name, None) is not None:
            out.append(f"sample.{name}={getattr(args, name)}")
    for name in ("summary", "draws"):
        if getattr(args, name, None) is not None:
            out.append(f"output.{name}={json.dumps(getattr(args, name))}")
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _flag_overrides(args))
        text, code, *extras = COMMANDS[args.command](cfg)
        _emit(text, cfg["output"].get("path"))
        for extra_text, path in (extras[0] if extras else []):
            _emit(extra_text, path)
        return code
    except CommandFailed as exc:
        _report_error(exc.payload, exc.code)
        return exc.code
    except CONFIG_ERRORS as exc:
        _report_error({"error": type(exc).__name__, "message": str(exc)}, EXIT_CONFIG)
        return EXIT_CONFIG
    except (OteError, np.linalg.LinAlgError) as exc:
        _report_error({"error": type(exc).__name__, "message": str(exc)}, EXIT_SOLVER)
        return EXIT_SOLVER


def _report_error(payload, code=None):
    if code is not None:
        payload = dict(payload, exit_code=code)
    sys.stderr.write(json.dumps(_json_safe(payload), allow_nan=False) + "\n")


if __name__ == "__main__":
    sys.exit(main())
