"""Deterministic pulse distortions and the resulting GHZ infidelity."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError
from .phases import PhysicalPulses
from .propagator import ComplexState, fidelity_ghz, propagate_pulses

DEFAULT_T_FRACTIONS = tuple(round(0.02 * k, 2) for k in range(11))
DEFAULT_KAPPAS = (1, 2, 3)


@dataclass(frozen=True)
class DistortionSpec:
    """Distortion ``t_n sin(2 pi kappa t / T) d|Omega_n|/dt`` of pulse ``n``."""

    n: int
    t_n: float
    kappa: int = 1

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise DomainError("pulse index must be 1, 2 or 3")
        if int(self.kappa) != self.kappa or self.kappa < 1:
            raise DomainError("kappa must be a positive integer")
        if not (math.isfinite(self.t_n) and self.t_n >= 0.0):
            raise DomainError("t_n must be non-negative")


def distortion(pulses: PhysicalPulses, spec: DistortionSpec) -> np.ndarray:
    """The added modulus ``delta|Omega_n|`` on the pulse grid."""
    mag = pulses.abs[spec.n - 1]
    # second order everywhere: centred inside, one-sided at the ends
    deriv = np.gradient(mag, pulses.t, edge_order=2)
    return spec.t_n * np.sin(2.0 * math.pi * spec.kappa * pulses.t / pulses.t_qb) * deriv


def distort(pulses: PhysicalPulses, spec: DistortionSpec) -> PhysicalPulses:
    """Pulses with ``|Omega_n|`` replaced by ``|Omega_n| + delta|Omega_n|``.

    Phases and the other two pulses are untouched. Moduli driven below zero
    are clamped and ``clamped`` is set on the result.
    """
    if spec.t_n == 0.0:
        return pulses
    k = spec.n - 1
    new_mag = pulses.abs[k] + distortion(pulses, spec)
    clamped = bool(np.any(new_mag < 0.0))
    amplitude = pulses.amplitude.copy()
    sign = -1.0 if np.sum(pulses.amplitude[k]) < 0.0 else 1.0
    amplitude[k] = sign * np.maximum(new_mag, 0.0)
    return replace(pulses, amplitude=amplitude, slope=None,
                   clamped=clamped or pulses.clamped)


@dataclass(frozen=True)
class SweepRow:
    pulse_index: int
    kappa: int
    t_n_over_tqb: float
    infidelity: float
    clamped: bool = False
    error: str | None = None


def final_infidelity(pulses: PhysicalPulses) -> float:
    prop = propagate_pulses(pulses, ComplexState.w_state())
    return 1.0 - fidelity_ghz(prop.final, pulses.phases.varphi)


def infidelity_sweep(pulses: PhysicalPulses, n: int, kappas=DEFAULT_KAPPAS,
                     t_values=DEFAULT_T_FRACTIONS) -> list[SweepRow]:
    """``1 - F_GHZ(T_qb)`` for each ``(kappa, t_n)``; ``t_values`` are fractions of T_qb.

    A failing cell is recorded with ``infidelity = nan`` and its error
    message; the sweep carries on.
    """
    rows = []
    for kappa in kappas:
        for frac in t_values:
            spec = DistortionSpec(n, float(frac) * pulses.t_qb, int(kappa))
            try:
                distorted = distort(pulses, spec)
                rows.append(SweepRow(n, int(kappa), float(frac),
                                     final_infidelity(distorted), distorted.clamped))
            except (ArithmeticError, RuntimeError, ValueError) as exc:
                rows.append(SweepRow(n, int(kappa), float(frac), float("nan"), error=str(exc)))
    return rows


def write_sweep(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("pulse_index", "kappa", "t_n_over_Tqb", "infidelity"))
        for r in rows:
            writer.writerow((r.pulse_index, r.kappa, f"{r.t_n_over_tqb:.17g}",
                             f"{r.infidelity:.17g}"))
