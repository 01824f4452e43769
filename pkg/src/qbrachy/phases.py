"""Constant-phase bookkeeping and reconstruction of physical pulses.

Only the moduli evolve; every Rabi frequency, multiplier and state
amplitude keeps a fixed phase. Two pulse phases (``phi1``, ``phi3``), the
GHZ phase ``varphi`` and the global phase ``phi_w`` are free, the rest
follow from them. Units: hbar = 1, times in hbar/E, frequencies in E/hbar.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory, rhs_rows
from .errors import DegenerateSolutionError, DomainError

#: Omega_n = factor_n * Omega_rn relates the effective couplings to the lab Rabi frequencies.
LAB_FACTORS = (math.sqrt(3.0), 2.0, math.sqrt(3.0))


def reduce_angle(a: float) -> float:
    """Representative of ``a`` in (-pi, pi]."""
    r = math.remainder(a, 2.0 * math.pi)
    return math.pi if r == -math.pi else r


@dataclass(frozen=True)
class PhaseSet:
    """Free phases plus derived ones. Derived values are kept unreduced."""

    phi1: float = 0.0
    phi3: float = 0.0
    varphi: float = 0.0
    phi_w: float = 0.0

    @property
    def phi2(self) -> float:
        return -self.phi1 - self.phi3 - self.varphi - math.pi / 2

    @property
    def phi_wr(self) -> float:
        return -self.phi1 - self.varphi

    @property
    def phi_gr(self) -> float:
        return -self.varphi - math.pi / 2

    @property
    def phi_gwp(self) -> float:
        return -self.phi3 - self.varphi

    @property
    def phi_g(self) -> float:
        return self.phi_w + self.phi1 - math.pi / 2

    @property
    def phi_wp(self) -> float:
        return self.phi_w + self.phi1 + self.phi3 + self.varphi

    @property
    def phi_r(self) -> float:
        return self.phi_w + self.phi1 + self.varphi - math.pi / 2

    @property
    def pulse_phases(self) -> tuple[float, float, float]:
        return self.phi1, self.phi2, self.phi3

    @property
    def multiplier_phases(self) -> tuple[float, float, float]:
        """Phases of ``(lambda_Wr, lambda_gr, lambda_gW')``."""
        return self.phi_wr, self.phi_gr, self.phi_gwp

    @property
    def state_phases(self) -> tuple[float, float, float, float]:
        return self.phi_g, self.phi_w, self.phi_wp, self.phi_r

    def reduced(self) -> dict[str, float]:
        names = ("phi1", "phi2", "phi3", "phi_wr", "phi_gr", "phi_gwp",
                 "phi_g", "phi_w", "phi_wp", "phi_r", "varphi")
        return {n: reduce_angle(getattr(self, n)) for n in names}


def derive_phases(phi1: float, phi3: float, varphi: float, phi_w: float = 0.0) -> PhaseSet:
    for v in (phi1, phi3, varphi, phi_w):
        if not math.isfinite(v):
            raise DomainError("phases must be finite")
    return PhaseSet(float(phi1), float(phi3), float(varphi), float(phi_w))


@dataclass(frozen=True)
class PhysicalPulses:
    """Sampled complex Rabi frequencies ``Omega_n(t) = amplitude_n(t) exp(i phase_n)``.

    ``amplitude`` is real with shape ``(3, m)``; its sign is fixed per pulse
    (the mirror solution carries a negative ``u2``, absorbed here as a
    phase shift of pi). ``slope`` holds d amplitude/dt when known exactly.
    """

    t: np.ndarray
    amplitude: np.ndarray
    phase: tuple[float, float, float]
    phases: PhaseSet
    energy: float
    t_qb: float
    slope: np.ndarray | None = None
    rate: float = float("nan")
    clamped: bool = False

    @property
    def abs(self) -> np.ndarray:
        return np.abs(self.amplitude)

    @property
    def omega(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * np.asarray(self.phase))[:, None]

    def energy_trapz(self) -> float:
        """Pulse energy ``int sum_n |Omega_n|^2 dt`` by the trapezoidal rule."""
        return float(np.trapezoid(np.sum(self.amplitude ** 2, axis=0), self.t))

    def to_csv(self, path) -> None:
        args = [reduce_angle(p) for p in self.phase]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("t", "abs_om1", "arg_om1", "abs_om2", "arg_om2",
                             "abs_om3", "arg_om3"))
            mags = self.abs
            for k, tk in enumerate(self.t):
                row = [tk]
                for n in range(3):
                    row += [mags[n, k], args[n]]
                writer.writerow([f"{v:.17g}" for v in row])


def _sign(values: np.ndarray) -> float:
    return -1.0 if np.sum(values) < 0.0 else 1.0


def to_physical(traj: Trajectory, x_star, xi_qb: float, phases: PhaseSet,
                energy: float = 1.0) -> PhysicalPulses:
    """Map the scaled solution on ``[0, xi_qb]`` to physical pulses.

    ``T_qb = u^2 Xi^2 / E`` and ``|lambda_Wr(0)| = Xi / T_qb``; times are
    ``xi / |lambda_Wr(0)|`` and amplitudes ``|lambda_Wr(0)| u_n``. The
    samples sit on a uniform grid no coarser than the trajectory's.
    """
    u = float(x_star[0]) if not hasattr(x_star, "u") else float(x_star.u)
    if energy <= 0.0 or not math.isfinite(energy):
        raise DomainError("energy must be positive")
    if u == 0.0 or xi_qb <= 0.0:
        raise DegenerateSolutionError("u = 0 or Xi = 0 gives an infinite conversion time")
    if xi_qb > traj.grid.xi_max * (1 + 1e-12):
        raise DomainError("xi_qb beyond the trajectory")

    t_qb = u ** 2 * xi_qb ** 2 / energy
    rate = xi_qb / t_qb
    m = max(1, math.ceil(xi_qb / traj.grid.step - 1e-9))
    xi = np.linspace(0.0, xi_qb, m + 1)
    states = traj.at(xi)
    derivs = rhs_rows(states)

    signs = np.array([_sign(states[:, n]) for n in range(3)])
    amplitude = rate * signs[:, None] * states[:, :3].T
    slope = rate ** 2 * signs[:, None] * derivs[:, :3].T
    phase = tuple(p + (math.pi if s < 0 else 0.0) for p, s in zip(phases.pulse_phases, signs))
    return PhysicalPulses(t=xi / rate, amplitude=amplitude, phase=phase, phases=phases,
                          energy=float(energy), t_qb=t_qb, slope=slope, rate=rate)
