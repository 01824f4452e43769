"""End-to-end solve: shooting, physical pulses, complex propagation and checks.

Shared by the command line and the test-suite so both judge a solution by
the same numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DEFAULT_STEP, TOL_NEG, Trajectory, XiGrid, integrate
from .phases import PhaseSet, PhysicalPulses, derive_phases, to_physical
from .propagator import (ComplexState, Propagation, check_f_evolution, fidelity_from_moduli,
                         fidelity_ghz, propagate_pulses)
from .shooting import XI_MAX, Method, ShootingResult, global_minimum

SQRT_HALF = math.sqrt(0.5)


@dataclass
class Solution:
    result: ShootingResult
    traj: Trajectory
    pulses: PhysicalPulses
    propagation: Propagation
    phases: PhaseSet
    checks: dict = field(default_factory=dict)

    @property
    def moduli(self) -> np.ndarray:
        """Reduced moduli on the pulse time grid, shape ``(m, 10)``."""
        return self.traj.at(self.pulses.t * self.pulses.rate)


def _spread(values: np.ndarray) -> float:
    return float(np.max(np.abs(values - values[0])) / abs(values[0]))


def run_checks(sol: Solution) -> dict:
    """Numerical diagnostics of a solution, keyed by name.

    Every entry is a float measured so that smaller is better, except the
    fidelities.
    """
    res, pulses = sol.result, sol.pulses
    on_solution = sol.traj.truncated(res.xi_qb)
    cons = {k: _spread(v) for k, v in on_solution.conserved().items()}
    fcheck = check_f_evolution(on_solution, sol.phases)
    tr2, tr3 = fcheck.trace_drift()

    end = sol.traj.at(res.xi_qb)
    rate = pulses.rate
    mags = pulses.abs
    moduli = sol.moduli
    prop_abs = np.abs(sol.propagation.psi)
    return {
        "drive_power_drift": cons["drive_power"],
        "costate_power_drift": cons["costate_power"],
        "norm_drift_reduced": cons["norm_sq"],
        "trace_f2_drift": tr2,
        "trace_f3_drift": tr3,
        "f_residual": fcheck.residual,
        "hermiticity": fcheck.hermiticity,
        "omega3_at_0": float(mags[2, 0]),
        "omega2_at_T": float(mags[1, -1]),
        "lambda_wr_minus_omega1_at_T": float(abs(rate * abs(end[3]) - mags[0, -1])),
        "lambda_gwp_minus_omega3_at_T": float(abs(rate * abs(end[5]) - mags[2, -1])),
        "psi_g_end_minus_sqrt_half": float(abs(end[6] - SQRT_HALF)),
        "psi_r_end_minus_sqrt_half": float(abs(end[9] - SQRT_HALF)),
        "most_negative_modulus": float(min(0.0, on_solution.states.min())),
        "negativity_budget": TOL_NEG + res.d_error,
        "propagation_norm_drift": sol.propagation.norm_drift(),
        "propagation_vs_moduli": float(np.max(np.abs(prop_abs - np.abs(moduli[:, 6:10])))),
        "energy_trapz": pulses.energy_trapz(),
        "fidelity_complex": fidelity_ghz(sol.propagation.final, sol.phases.varphi),
        "fidelity_moduli": float(fidelity_from_moduli(end[6], end[9])),
    }


def solve(*, xi_max: float = XI_MAX, starts: int = 8,
          method: Method | str = Method.NELDER_MEAD, step: float = DEFAULT_STEP,
          jobs: int = 1, energy: float = 1.0, phases: PhaseSet | None = None,
          result: ShootingResult | None = None) -> Solution:
    """Shortest-time solution plus its physical pulses and checks.

    The multistart is polished with BFGS. Passing ``result`` skips the
    search and reuses a known initial point.
    """
    phases = phases or derive_phases(0.0, 0.0, 0.0)
    if result is None:
        result = global_minimum(xi_max, starts=starts, method=method, step=step,
                                jobs=jobs, polish=Method.BFGS)
    traj = integrate(result.x_star, XiGrid.with_step(xi_max, step))
    pulses = to_physical(traj, result.x_star, result.xi_qb, phases, energy)
    prop = propagate_pulses(pulses, ComplexState.w_state())
    sol = Solution(result, traj, pulses, prop, phases)
    sol.checks = run_checks(sol)
    return sol


#: upper limits for the "smaller is better" diagnostics
CHECK_LIMITS = {
    "drive_power_drift": 1e-6,
    "costate_power_drift": 1e-6,
    "norm_drift_reduced": 1e-6,
    "trace_f2_drift": 1e-6,
    "trace_f3_drift": 1e-6,
    "f_residual": 1e-4,
    "hermiticity": 1e-12,
    "omega3_at_0": 1e-3,
    "omega2_at_T": 1e-3,
    "lambda_wr_minus_omega1_at_T": 1e-3,
    "lambda_gwp_minus_omega3_at_T": 1e-3,
    "psi_g_end_minus_sqrt_half": 1e-3,
    "psi_r_end_minus_sqrt_half": 1e-3,
    "propagation_norm_drift": 1e-6,
    "propagation_vs_moduli": 1e-6,
}
MIN_FIDELITY = 0.999


def failed_checks(sol: Solution) -> list[str]:
    """Names of diagnostics outside their limits; empty when all pass."""
    c = sol.checks
    bad = [k for k, lim in CHECK_LIMITS.items() if not c[k] < lim]
    if not c["most_negative_modulus"] >= -c["negativity_budget"]:
        bad.append("most_negative_modulus")
    if not abs(c["energy_trapz"] - sol.pulses.energy) < 1e-6 * sol.pulses.energy:
        bad.append("energy_trapz")
    bad += [k for k in ("fidelity_complex", "fidelity_moduli") if not c[k] >= MIN_FIDELITY]
    return bad
