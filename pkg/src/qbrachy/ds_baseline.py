"""Trapezoid-pulse baseline from the dynamical-symmetry construction.

The three real pulses share one trapezoidal envelope with rise fraction
``tau`` and fixed relative weights ``|c_n|``. Fixing the total pulse energy
fixes the duration, which is what gets compared with the time-optimal
protocol.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .propagator import PulseSampler

C_ABS = (1.225, 1.420, 2.352)
TAU_MAX = 1.0 / 3.0


def _check_tau(tau: float) -> None:
    if not 0.0 <= tau <= TAU_MAX + 1e-15:
        raise DomainError(f"tau={tau} outside [0, 1/3]")


def trapezoid_f(x, tau: float):
    """Unit-height trapezoid on [0, 1] with ramps of width ``tau``.

    ``tau = 0`` is the rectangle (1 on the whole interval).
    """
    _check_tau(tau)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0.0) or np.any(xa > 1.0):
        raise DomainError("x outside [0, 1]")
    if tau == 0.0:
        out = np.ones_like(xa)
    else:
        out = np.minimum(1.0, np.minimum(xa, 1.0 - xa) / tau)
    return float(out) if out.ndim == 0 else out


def envelope_energy(tau: float) -> float:
    """``int_0^1 f(x)^2 dx``."""
    _check_tau(tau)
    return (3.0 - 4.0 * tau) / 3.0


def t_ds_for_energy(tau: float, energy: float = 1.0, c_abs=C_ABS) -> float:
    """Protocol duration (hbar/E units with E = ``energy``) at fixed pulse energy."""
    _check_tau(tau)
    if energy <= 0.0:
        raise DomainError("energy must be positive")
    weight = sum(c * c for c in c_abs)
    return weight * (3.0 - 4.0 * tau) / (3.0 * (1.0 - tau) ** 2) / energy


@dataclass(frozen=True)
class DsParams:
    tau: float
    energy: float = 1.0
    c_abs: tuple[float, float, float] = C_ABS

    def __post_init__(self):
        _check_tau(self.tau)
        if self.energy <= 0.0:
            raise DomainError("energy must be positive")

    @property
    def t_ds(self) -> float:
        return t_ds_for_energy(self.tau, self.energy, self.c_abs)


def ds_pulses(params: DsParams) -> PulseSampler:
    """Real pulses ``c_n / (T (1 - tau)) f(t / T)`` on ``[0, T_ds]``.

    Only the moduli of ``c_n`` are known, so all three are taken positive.
    """
    T = params.t_ds
    c = np.asarray(params.c_abs, dtype=float) / (T * (1.0 - params.tau))

    def fun(t):
        x = np.clip(np.asarray(t, dtype=float) / T, 0.0, 1.0)
        env = np.asarray(trapezoid_f(x, params.tau))
        return (env[..., None] * c).astype(complex)

    return PulseSampler(fun, T)


@dataclass(frozen=True)
class RatioRow:
    tau: float
    t_ds: float
    t_qb: float

    @property
    def ratio(self) -> float:
        return self.t_ds / self.t_qb

    def as_dict(self) -> dict:
        return {"tau": self.tau, "t_ds": self.t_ds, "t_qb": self.t_qb, "ratio": self.ratio}


def compare(taus, t_qb: float, energy: float = 1.0) -> list[RatioRow]:
    """Duration ratios against a time-optimal ``t_qb`` at the same energy."""
    if t_qb <= 0.0:
        raise DomainError("t_qb must be positive")
    return [RatioRow(float(tau), t_ds_for_energy(float(tau), energy), t_qb) for tau in taus]


def write_comparison(rows: list[RatioRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump([r.as_dict() for r in rows], fh, indent=2)
        fh.write("\n")


def parse_tau(text: str) -> float:
    """Accept decimal values or simple fractions such as ``1/3``."""
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    value = float(text)
    if not math.isfinite(value):
        raise DomainError("tau must be finite")
    return value
