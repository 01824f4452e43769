"""Acceptance criteria, one test each; every test records a PASS/FAIL line."""
import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from qbrachy.ds_baseline import compare
from qbrachy.phases import derive_phases
from qbrachy.pipeline import solve
from qbrachy.robustness import DEFAULT_T_FRACTIONS, infidelity_sweep
from qbrachy.shooting import Method, minimize, verify_xi_max

PHI = 0.311 * math.pi


def record(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def run_solve(out):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "qbrachy", "solve", "--out", str(out)],
                          capture_output=True, text=True)
    return proc.returncode, time.perf_counter() - start


@pytest.fixture(scope="module")
def default_runs(tmp_path_factory):
    a = tmp_path_factory.mktemp("solve_a")
    b = tmp_path_factory.mktemp("solve_b")
    code_a, secs = run_solve(a)
    code_b, _ = run_solve(b)
    return a, b, code_a, code_b, secs


def test_criterion_1_headline(default_runs):
    out, _, code, _, secs = default_runs
    r = json.loads((out / "report.json").read_text())
    phi = r["phi_u"]
    in_basin = abs(phi - PHI) <= 0.002 * math.pi or abs(phi - 1.689 * math.pi) <= 0.002 * math.pi
    ok = (code == 0 and abs(r["u"] - 0.957) <= 0.002 and in_basin
          and abs(r["xi_qb"] - 2.72) <= 0.01 and abs(r["t_qb"] - 6.8) <= 0.1
          and r["D"] < 1e-3 and secs < 120)
    record(1, "headline solution", ok,
           f"u={r['u']:.6f} phi_u={phi / math.pi:.6f}pi Xi={r['xi_qb']:.5f} "
           f"T={r['t_qb']:.5f} D={r['D']:.2e} runtime={secs:.1f}s")


def test_criterion_2_minimizer_agreement():
    details, ok = [], True
    for start in ((0.9, 0.3 * math.pi), (0.95, 0.35 * math.pi),
                  (0.9, 1.7 * math.pi), (0.95, 1.65 * math.pi)):
        found = [minimize(start, m) for m in Method]
        pts = np.array([[r.x_star.u, r.x_star.phi_u] for r in found])
        spread = float(np.max(np.abs(pts - pts[0])))
        ok &= all(r.converged for r in found) and spread < 1e-3
        details.append(f"start=({start[0]},{start[1] / math.pi:.2f}pi) spread={spread:.1e}")
    record(2, "Nelder-Mead, BFGS and Newton agree", ok, "; ".join(details))


def test_criterion_3_baseline_ratios(default_runs):
    out = default_runs[0]
    t_qb = json.loads((out / "report.json").read_text())["t_qb"]
    r0, r13 = (row.ratio for row in compare([0.0, 1 / 3], t_qb))
    ok = abs(r13 - 1.66) <= 0.02 and abs(r0 - 1.33) <= 0.02
    record(3, "trapezoid baseline ratios", ok, f"tau=0: {r0:.4f} tau=1/3: {r13:.4f}")


def test_criterion_4_ximax_sweep():
    rows = verify_xi_max([2.0, 2.5, 3.0, 5.0, 10.0])
    by = {r.xi_max: r for r in rows}
    ok = (by[2.0].d_min > 1e-3 and by[2.5].d_min > 1e-3
          and all(abs(by[x].xi - 2.72) <= 0.01 for x in (3.0, 5.0, 10.0)))
    record(4, "xi_max sweep", ok,
           " ".join(f"[{r.xi_max}: D={r.d_min:.2e} Xi={r.xi:.4f}]" for r in rows))


def test_criterion_5_oracle_equivalence(optimum):
    worst_dev, worst_fid, ok = 0.0, 1.0, True
    for phi1, phi3 in ((0.0, 0.0), (0.7, -1.3)):
        for varphi in (0.0, math.pi / 3, math.pi):
            sol = solve(result=optimum, phases=derive_phases(phi1, phi3, varphi))
            dev = sol.checks["propagation_vs_moduli"]
            fid = sol.checks["fidelity_complex"]
            worst_dev, worst_fid = max(worst_dev, dev), min(worst_fid, fid)
            ok &= dev < 1e-6 and fid >= 0.999
    record(5, "complex propagation matches reduced moduli", ok,
           f"max |psi| deviation={worst_dev:.2e} min fidelity={worst_fid:.12f}")


def test_criterion_6_conservation(solution):
    c = solution.checks
    keys = ("drive_power_drift", "costate_power_drift", "norm_drift_reduced",
            "trace_f2_drift", "trace_f3_drift")
    ok = all(c[k] < 1e-6 for k in keys) and c["f_residual"] < 1e-4
    record(6, "conservation and F evolution", ok,
           " ".join(f"{k}={c[k]:.1e}" for k in keys) + f" f_residual={c['f_residual']:.1e}")


def test_criterion_7_boundary_structure(solution):
    c = solution.checks
    keys = ("omega3_at_0", "omega2_at_T", "lambda_wr_minus_omega1_at_T",
            "lambda_gwp_minus_omega3_at_T")
    ok = all(c[k] < 1e-3 for k in keys)
    record(7, "boundary structure", ok, " ".join(f"{k}={c[k]:.1e}" for k in keys))


def test_criterion_8_robustness(solution):
    sweeps = {n: infidelity_sweep(solution.pulses, n) for n in (1, 2, 3)}
    baseline = max(r.infidelity for rows in sweeps.values() for r in rows
                   if r.t_n_over_tqb == 0.0)
    monotone = True
    for rows in sweeps.values():
        vals = [r.infidelity for r in rows if r.kappa == 1 and r.t_n_over_tqb <= 0.15 + 1e-12]
        monotone &= bool(np.all(np.diff(vals) > 0.0)) and all(np.isfinite(vals))
    reversed_cells = [(a.kappa, a.t_n_over_tqb) for a, b in zip(sweeps[1], sweeps[3])
                      if not a.infidelity <= b.infidelity]
    ok = baseline < 1e-3 and monotone and not reversed_cells
    record(8, "robustness orderings", ok,
           f"baseline={baseline:.1e} monotone_k1={monotone} "
           f"omega1>omega3 at (kappa,t_n/T)={reversed_cells} "
           f"over t_n/T in {DEFAULT_T_FRACTIONS[0]}..{DEFAULT_T_FRACTIONS[-1]}")


def test_criterion_9_determinism(default_runs):
    a, b, code_a, code_b, _ = default_runs
    names = sorted(p.name for p in a.iterdir())
    same = names == sorted(p.name for p in b.iterdir()) and all(
        (a / n).read_bytes() == (b / n).read_bytes() for n in names)
    record(9, "byte-identical reruns", same and code_a == code_b == 0,
           f"files={names} identical={same}")
