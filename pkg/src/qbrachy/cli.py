"""Command-line front end.

Every subcommand writes its data files into the output directory and prints
a JSON summary on stdout. Exit codes: 0 success, 1 failed self-test,
2 non-convergence or failed cells, 64 bad arguments.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ds_baseline import compare, parse_tau
from .dynamics import DEFAULT_STEP, FIELDS
from .errors import DomainError
from .phases import derive_phases, reduce_angle
from .pipeline import Solution, failed_checks, solve
from .propagator import fidelity_from_moduli
from .robustness import DEFAULT_KAPPAS, DEFAULT_T_FRACTIONS, infidelity_sweep
from .shooting import (XI_MAX, InitialPoint, Method, ShootingResult, error_D, global_minimum,
                       grid_scan, verify_xi_max)

DEFAULT_OUT = "qbrachy_out"
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64


def output_dir(arg: str | None) -> Path:
    """``--out`` beats ``$QBRACHY_OUT``, which beats the default."""
    path = Path(arg or os.environ.get("QBRACHY_OUT") or DEFAULT_OUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_json_value(payload), fh, indent=2)
        fh.write("\n")


def write_table(out: Path, stem: str, columns: list[str], rows, fmt: str) -> Path:
    """Write ``rows`` as ``stem.csv`` or ``stem.json`` (list of records)."""
    rows = [list(r) for r in rows]
    if fmt == "json":
        path = out / f"{stem}.json"
        write_json(path, [dict(zip(columns, r)) for r in rows])
        return path
    path = out / f"{stem}.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")
    return path


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(_json_value(payload), indent=2) + "\n")


# ---------------------------------------------------------------- solve

def _phases(args):
    return derive_phases(args.phi1, args.phi3, args.varphi, args.phi_w)


def solution_report(sol: Solution) -> dict:
    r = sol.result
    return {
        "converged": r.converged,
        "u": r.x_star.u,
        "phi_u": r.x_star.phi_u,
        "phi_u_over_pi": r.x_star.phi_u / math.pi,
        "xi_qb": r.xi_qb,
        "t_qb": sol.pulses.t_qb,
        "D": r.d_error,
        "method": r.method.value,
        "energy": sol.pulses.energy,
        "lambda_wr_0": sol.pulses.rate,
        "phases": sol.phases.reduced(),
        "final_fidelity": sol.checks["fidelity_complex"],
        "checks": sol.checks,
        "failed_checks": failed_checks(sol),
    }


def write_solution(sol: Solution, out: Path, fmt: str) -> list[Path]:
    p = sol.pulses
    mod = sol.moduli
    args = [reduce_angle(a) for a in p.phase]
    files = [out / "report.json"]
    write_json(files[0], solution_report(sol))
    mags = p.abs
    files.append(write_table(
        out, "pulses", ["t", "abs_om1", "arg_om1", "abs_om2", "arg_om2", "abs_om3", "arg_om3"],
        ([t, mags[0, k], args[0], mags[1, k], args[1], mags[2, k], args[2]]
         for k, t in enumerate(p.t)), fmt))
    xi = p.t * p.rate
    files.append(write_table(out, "trajectory", ["xi", *FIELDS],
                             ([x, *row] for x, row in zip(xi, mod)), fmt))
    files.append(write_table(
        out, "state_components", ["t", "abs_psi_g", "abs_psi_w", "abs_psi_wp", "abs_psi_r"],
        ([t, *np.abs(row[6:10])] for t, row in zip(p.t, mod)), fmt))
    # the phase-locked fidelity depends on the moduli only
    fid = fidelity_from_moduli(np.abs(mod[:, 6]), np.abs(mod[:, 9]))
    files.append(write_table(out, "fidelity", ["t", "fidelity"], zip(p.t, fid), fmt))
    return files


def cmd_solve(args) -> int:
    out = output_dir(args.out)
    sol = solve(xi_max=args.xi_max, starts=args.starts, method=args.method, step=args.step,
                jobs=args.jobs, energy=args.energy, phases=_phases(args))
    files = write_solution(sol, out, args.format)
    report = solution_report(sol)
    report["files"] = [f.name for f in files]
    _emit(report)
    return 0 if sol.result.converged else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------- scan

def cmd_scan(args) -> int:
    out = output_dir(args.out)
    scan = grid_scan(args.n, args.xi_max, minimize=args.minimize, method=args.method,
                     step=args.step, jobs=args.jobs)
    cols = ["u", "phi_u", "D", "xi_star"]
    if scan.minimized:
        cols += ["u_star", "phi_star", "converged", "basin"]
    rows = []
    for i, u in enumerate(scan.u):
        for j, phi in enumerate(scan.phi_u):
            row = [u, phi, scan.d[i, j], scan.xi_star[i, j]]
            if scan.minimized:
                row += [scan.u_star[i, j], scan.phi_star[i, j], bool(scan.converged[i, j]),
                        int(scan.basin[i, j])]
            rows.append(row)
    path = write_table(out, "scan", cols, rows, args.format)
    i, j = scan.argmin()
    summary = {"file": path.name, "n": args.n, "xi_max": args.xi_max,
               "minimized": scan.minimized,
               "grid_min": {"u": scan.u[i], "phi_u": scan.phi_u[j], "D": scan.d[i, j]}}
    ok = True
    if scan.minimized:
        summary["converged_fraction"] = float(np.mean(scan.converged))
        ok = bool(np.any(scan.converged))
    _emit(summary)
    return 0 if ok else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------- verify-ximax

def cmd_verify_ximax(args) -> int:
    out = output_dir(args.out)
    values = [float(v) for v in args.values.split(",")]
    rows = verify_xi_max(values, starts=args.starts, method=args.method, step=args.step,
                         jobs=args.jobs)
    cols = ["xi_max", "d_min", "xi", "u", "phi_u", "t_hbar_over_E"]
    path = write_table(out, "ximax", cols, ([r.as_dict()[c] for c in cols] for r in rows),
                       args.format)
    # small bounds are expected to miss the threshold: that is the finding, not a failure
    _emit({"file": path.name, "rows": [r.as_dict() for r in rows]})
    return 0


# ---------------------------------------------------------------- ds-compare

def _t_qb(args) -> float:
    if args.t_qb is not None:
        return args.t_qb / args.energy
    best = global_minimum(args.xi_max, starts=args.starts, method=args.method,
                          step=args.step, jobs=args.jobs, polish=Method.BFGS)
    if not best.converged:
        raise _NotConverged(best)
    return best.t_qb / args.energy


class _NotConverged(Exception):
    def __init__(self, result: ShootingResult):
        super().__init__("no initial point met the convergence threshold")
        self.result = result


def cmd_ds_compare(args) -> int:
    out = output_dir(args.out)
    taus = [parse_tau(t) for t in args.taus.split(",")]
    rows = compare(taus, _t_qb(args), args.energy)
    path = write_table(out, "ds_compare", ["tau", "t_ds", "t_qb", "ratio"],
                       ([r.tau, r.t_ds, r.t_qb, r.ratio] for r in rows), args.format)
    _emit({"file": path.name, "rows": [r.as_dict() for r in rows]})
    return 0


# ---------------------------------------------------------------- robustness

def _given_result(args) -> ShootingResult | None:
    if args.u is None and args.phi_u is None:
        return None
    if args.u is None or args.phi_u is None:
        raise DomainError("--u and --phi-u go together")
    x = InitialPoint(args.u, args.phi_u)
    d, xi = error_D(x, args.xi_max, args.step)
    return ShootingResult(x, xi, d, d < 1e-3, Method(args.method))


def cmd_robustness(args) -> int:
    out = output_dir(args.out)
    sol = solve(xi_max=args.xi_max, starts=args.starts, method=args.method, step=args.step,
                jobs=args.jobs, energy=args.energy, phases=_phases(args),
                result=_given_result(args))
    if not sol.result.converged:
        raise _NotConverged(sol.result)
    kappas = [int(k) for k in args.kappas.split(",")]
    fracs = [float(t) for t in args.t_fractions.split(",")]
    rows = []
    for n in (int(p) for p in args.pulses.split(",")):
        rows += infidelity_sweep(sol.pulses, n, kappas, fracs)
    path = write_table(out, "robustness", ["pulse_index", "kappa", "t_n_over_Tqb", "infidelity"],
                       ([r.pulse_index, r.kappa, r.t_n_over_tqb, r.infidelity] for r in rows),
                       args.format)
    errors = [{"pulse_index": r.pulse_index, "kappa": r.kappa, "t_n_over_Tqb": r.t_n_over_tqb,
               "error": r.error} for r in rows if r.error]
    clamped = sum(r.clamped for r in rows)
    _emit({"file": path.name, "t_qb": sol.pulses.t_qb, "cells": len(rows),
           "clamped_cells": clamped, "errors": errors})
    return EXIT_NOT_CONVERGED if errors else 0


# ---------------------------------------------------------------- selftest

def cmd_selftest(args) -> int:
    sol = solve(xi_max=args.xi_max, starts=args.starts, method=args.method, step=args.step,
                jobs=args.jobs, energy=args.energy, phases=_phases(args))
    bad = set(failed_checks(sol))
    lines = []
    for name, value in sol.checks.items():
        if name == "negativity_budget":
            continue
        lines.append({"check": name, "value": value, "pass": name not in bad})
    if not sol.result.converged:
        lines.append({"check": "converged", "value": sol.result.d_error, "pass": False})
    for line in lines:
        sys.stderr.write(f"{'PASS' if line['pass'] else 'FAIL'} {line['check']} = "
                         f"{line['value']:.3e}\n")
    ok = all(line["pass"] for line in lines)
    _emit({"passed": ok, "checks": lines, "solution": solution_report(sol)})
    return 0 if ok else 1


# ---------------------------------------------------------------- parser

def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not (math.isfinite(v) and v > 0.0):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def _finite(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError("must be finite")
    return v


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would read as non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", help=f"output directory (else $QBRACHY_OUT, else ./{DEFAULT_OUT})")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="format of the data tables (default csv)")
    common.add_argument("--jobs", type=_positive_int, default=1, help="worker processes")
    common.add_argument("--xi-max", type=_positive_float, default=XI_MAX,
                        help=f"upper bound of the scaled-time search (default {XI_MAX})")
    common.add_argument("--method", choices=[m.value for m in Method], default="nelder-mead",
                        help="local minimizer (default nelder-mead)")
    common.add_argument("--starts", type=_positive_int, default=8,
                        help="multistart grid is starts x starts (default 8)")
    common.add_argument("--step", type=_positive_float, default=DEFAULT_STEP,
                        help=f"RK4 step in scaled time (default {DEFAULT_STEP})")
    common.add_argument("--energy", type=_positive_float, default=1.0,
                        help="pulse energy E; times scale as 1/E (default 1)")

    phases = _Parser(add_help=False)
    for flag in ("--phi1", "--phi3", "--varphi", "--phi-w"):
        phases.add_argument(flag, type=_finite, default=0.0)

    parser = _Parser(prog="qbrachy",
                                     description="Time-optimal W to GHZ conversion.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common, phases], help="find the optimal protocol")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("scan", parents=[common], help="error landscape on a polar grid")
    p.add_argument("--n", type=_positive_int, default=50, help="grid points per axis minus one")
    p.add_argument("--minimize", action="store_true", help="also minimize from every node")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("verify-ximax", parents=[common], help="sweep the xi upper bound")
    p.add_argument("--values", default="2,2.5,3,5,10", help="comma-separated bounds")
    p.set_defaults(func=cmd_verify_ximax)

    p = sub.add_parser("ds-compare", parents=[common], help="trapezoid baseline durations")
    p.add_argument("--taus", default="0,1/3", help="comma-separated rise fractions")
    p.add_argument("--t-qb", type=_positive_float, default=None,
                   help="optimal time at E = 1; computed when omitted")
    p.set_defaults(func=cmd_ds_compare)

    p = sub.add_parser("robustness", parents=[common, phases], help="distortion sweep")
    p.add_argument("--pulses", default="1,2,3")
    p.add_argument("--kappas", default=",".join(map(str, DEFAULT_KAPPAS)))
    p.add_argument("--t-fractions", default=",".join(map(str, DEFAULT_T_FRACTIONS)),
                   help="distortion strengths as fractions of the optimal time")
    p.add_argument("--u", type=_finite, default=None, help="skip the search: known u")
    p.add_argument("--phi-u", type=_finite, default=None, help="skip the search: known phi_u")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("selftest", parents=[common, phases], help="run the invariant checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NotConverged as exc:
        _emit({"converged": False, "error": str(exc), **exc.result.as_dict()})
        return EXIT_NOT_CONVERGED
    except (DomainError, ValueError) as exc:
        _emit({"error": str(exc)})
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
