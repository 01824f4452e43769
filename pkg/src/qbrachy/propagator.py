"""Complex four-level propagation, GHZ fidelity and F-matrix checks.

This module knows nothing about the reduced moduli equations: it takes
complex pulses, builds the tridiagonal Hamiltonian on
``(|ggg>, |W>, |W'>, |rrr>)`` and integrates ``i dpsi/dt = H psi`` with RK4.
That makes it an independent check on the reduced solution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .dynamics import Trajectory
from .errors import DomainError, NormDriftError
from .phases import PhaseSet, PhysicalPulses

NORM_DRIFT_LIMIT = 1e-6
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ComplexState:
    psi_g: complex
    psi_w: complex
    psi_wp: complex
    psi_r: complex

    @classmethod
    def from_array(cls, a) -> "ComplexState":
        return cls(*(complex(v) for v in a))

    @classmethod
    def w_state(cls) -> "ComplexState":
        return cls(0j, 1 + 0j, 0j, 0j)

    @classmethod
    def ghz(cls, varphi: float) -> "ComplexState":
        return cls(1 / SQRT2 + 0j, 0j, 0j, np.exp(1j * varphi) / SQRT2)

    def as_array(self) -> np.ndarray:
        return np.array([self.psi_g, self.psi_w, self.psi_wp, self.psi_r], dtype=complex)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


def hamiltonian(om1: complex, om2: complex, om3: complex) -> np.ndarray:
    h = np.zeros((4, 4), dtype=complex)
    h[0, 1], h[1, 2], h[2, 3] = om1, om2, om3
    return h + h.conj().T


class PulseSampler:
    """Callable ``t -> (Omega_1, Omega_2, Omega_3)`` on ``[0, duration]``.

    Accepts a scalar (returns shape ``(3,)``) or an array of times
    (returns ``(m, 3)``).
    """

    def __init__(self, fun, duration: float):
        self.fun = fun
        self.duration = float(duration)

    def __call__(self, t):
        return self.fun(t)

    @classmethod
    def from_pulses(cls, pulses: PhysicalPulses) -> "PulseSampler":
        """Cubic interpolation of the amplitudes; phases stay constant.

        Exact slopes give a Hermite interpolant, otherwise a not-a-knot
        cubic spline through the samples.
        """
        if pulses.slope is not None:
            interp = CubicHermiteSpline(pulses.t, pulses.amplitude, pulses.slope, axis=1)
        else:
            interp = CubicSpline(pulses.t, pulses.amplitude, axis=1)
        factors = np.exp(1j * np.asarray(pulses.phase))

        def fun(t):
            return np.moveaxis(interp(t), 0, -1) * factors

        return cls(fun, pulses.t[-1])

    @classmethod
    def constant(cls, om1, om2, om3, duration: float) -> "PulseSampler":
        values = np.array([om1, om2, om3], dtype=complex)

        def fun(t):
            t = np.asarray(t, dtype=float)
            return np.broadcast_to(values, t.shape + (3,)).copy()

        return cls(fun, duration)


@njit(cache=True)
def _schrodinger(psi, o1, o2, o3, out):
    out[0] = -1j * (o1 * psi[1])
    out[1] = -1j * (np.conj(o1) * psi[0] + o2 * psi[2])
    out[2] = -1j * (np.conj(o2) * psi[1] + o3 * psi[3])
    out[3] = -1j * (np.conj(o3) * psi[2])


@njit(cache=True)
def _rk4_complex(psi0, om, h):
    # om holds pulses at t = j h / 2, j = 0 .. 2n
    n = (om.shape[0] - 1) // 2
    out = np.empty((n + 1, 4), dtype=np.complex128)
    out[0] = psi0
    k1 = np.empty(4, dtype=np.complex128)
    k2 = np.empty(4, dtype=np.complex128)
    k3 = np.empty(4, dtype=np.complex128)
    k4 = np.empty(4, dtype=np.complex128)
    tmp = np.empty(4, dtype=np.complex128)
    for i in range(n):
        y = out[i]
        a, b, c = om[2 * i], om[2 * i + 1], om[2 * i + 2]
        _schrodinger(y, a[0], a[1], a[2], k1)
        for j in range(4):
            tmp[j] = y[j] + 0.5 * h * k1[j]
        _schrodinger(tmp, b[0], b[1], b[2], k2)
        for j in range(4):
            tmp[j] = y[j] + 0.5 * h * k2[j]
        _schrodinger(tmp, b[0], b[1], b[2], k3)
        for j in range(4):
            tmp[j] = y[j] + h * k3[j]
        _schrodinger(tmp, c[0], c[1], c[2], k4)
        for j in range(4):
            out[i + 1, j] = y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
    return out


@dataclass(frozen=True)
class Propagation:
    t: np.ndarray
    psi: np.ndarray  # (n + 1, 4) complex

    def __getitem__(self, k) -> ComplexState:
        return ComplexState.from_array(self.psi[k])

    @property
    def final(self) -> ComplexState:
        return self[-1]

    def norm_drift(self) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            drift = np.max(np.abs(np.sum(np.abs(self.psi) ** 2, axis=1) - 1.0))
        return float(drift) if np.isfinite(drift) else math.inf

    def fidelity(self, varphi: float) -> np.ndarray:
        f = np.abs(self.psi[:, 0] + np.exp(-1j * varphi) * self.psi[:, 3]) / SQRT2
        return np.minimum(f, 1.0)


def propagate(initial: ComplexState, pulses: PulseSampler, T: float, n_steps: int,
              *, check_norm: bool = True) -> Propagation:
    """RK4 solution of ``i dpsi/dt = H(t) psi`` on ``n_steps`` equal steps of ``[0, T]``.

    No renormalization is applied; a norm drift above ``1e-6`` raises
    :class:`NormDriftError` unless ``check_norm`` is off.
    """
    if int(n_steps) != n_steps or n_steps < 1:
        raise DomainError("n_steps must be a positive integer")
    if T <= 0.0:
        raise DomainError("T must be positive")
    psi0 = initial.as_array()
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-8:
        raise DomainError("initial state is not normalized")
    h = T / n_steps
    half = np.linspace(0.0, T, 2 * n_steps + 1)
    om = np.ascontiguousarray(pulses(half), dtype=complex)
    if not np.all(np.isfinite(om)):
        raise DomainError("pulses are not finite on [0, T]")
    psi = _rk4_complex(psi0, om, h)
    result = Propagation(half[::2], psi)
    drift = result.norm_drift()
    if check_norm and drift > NORM_DRIFT_LIMIT:
        raise NormDriftError(f"norm drift {drift:.3e} exceeds {NORM_DRIFT_LIMIT}")
    return result


def propagate_pulses(pulses: PhysicalPulses, initial: ComplexState | None = None,
                     n_steps: int | None = None, **kwargs) -> Propagation:
    """Propagate the initial W state (by default) through a pulse table to ``t_qb``."""
    initial = initial or ComplexState.w_state()
    n_steps = n_steps or len(pulses.t) - 1
    return propagate(initial, PulseSampler.from_pulses(pulses), pulses.t[-1], n_steps, **kwargs)


def fidelity_ghz(state: ComplexState, varphi: float) -> float:
    """``|<GHZ(varphi)|psi>|``."""
    value = abs(state.psi_g + np.exp(-1j * varphi) * state.psi_r) / SQRT2
    return float(min(value, 1.0))


def fidelity_from_moduli(psi_g, psi_r):
    """Fidelity of a phase-constrained state from its two moduli."""
    return np.minimum((np.asarray(psi_g) + np.asarray(psi_r)) / SQRT2, 1.0)


def reconstruct_state(traj_states: np.ndarray, phases: PhaseSet) -> np.ndarray:
    """Complex amplitudes from reduced moduli and the constant state phases."""
    factors = np.exp(1j * np.array(phases.state_phases))
    return np.atleast_2d(traj_states)[:, 6:10] * factors


def reconstruct_f(states: np.ndarray, phases: PhaseSet) -> tuple[np.ndarray, np.ndarray]:
    """Scaled ``H`` and ``F = H + Lambda`` for every row of ``states``.

    Returns two arrays of shape ``(m, 4, 4)``.
    """
    s = np.atleast_2d(states)
    m = s.shape[0]
    p1, p2, p3 = (np.exp(1j * p) for p in phases.pulse_phases)
    q_wr, q_gr, q_gwp = (np.exp(1j * p) for p in phases.multiplier_phases)
    h = np.zeros((m, 4, 4), dtype=complex)
    h[:, 0, 1] = s[:, 0] * p1
    h[:, 1, 2] = s[:, 1] * p2
    h[:, 2, 3] = s[:, 2] * p3
    lam = np.zeros((m, 4, 4), dtype=complex)
    lam[:, 1, 3] = s[:, 3] * q_wr
    lam[:, 0, 3] = s[:, 4] * q_gr
    lam[:, 0, 2] = s[:, 5] * q_gwp
    h = h + np.conj(np.swapaxes(h, 1, 2))
    lam = lam + np.conj(np.swapaxes(lam, 1, 2))
    return h, h + lam


@dataclass(frozen=True)
class FCheck:
    residual: float
    trace2: np.ndarray
    trace3: np.ndarray
    hermiticity: float

    def trace_drift(self) -> tuple[float, float]:
        """Spread of ``Tr F^2`` and ``Tr F^3`` relative to ``(Tr F^2)^(n/2)``.

        ``Tr F^3`` vanishes on the W-state boundary, so it is measured on
        the scale set by the matrix norm rather than by its own value.
        """
        scale = abs(self.trace2[0])
        return tuple(float(np.max(np.abs(tr - tr[0])) / scale ** (n / 2))
                     for n, tr in ((2, self.trace2), (3, self.trace3)))


def check_f_evolution(traj: Trajectory, phases: PhaseSet, xi_end: float | None = None) -> FCheck:
    """Residual of ``dF/dxi = -i [H, F]`` along the trajectory.

    ``F`` is rebuilt from the moduli and the constant phases on the grid
    nodes up to ``xi_end``; ``dF/dxi`` comes from second-order finite
    differences. The residual is the largest entry of
    ``dF/dxi + i [H, F]`` over all nodes.
    """
    xi = traj.xi
    keep = xi <= (xi_end if xi_end is not None else xi[-1]) + 1e-12
    h, f = reconstruct_f(traj.states[keep], phases)
    df = np.gradient(f, xi[keep], axis=0, edge_order=2)
    comm = h @ f - f @ h
    residual = float(np.max(np.abs(df + 1j * comm)))
    herm = float(max(np.max(np.abs(f - np.conj(np.swapaxes(f, 1, 2)))),
                     np.max(np.abs(h - np.conj(np.swapaxes(h, 1, 2))))))
    f2 = f @ f
    trace2 = np.real(np.trace(f2, axis1=1, axis2=2))
    trace3 = np.real(np.trace(f2 @ f, axis1=1, axis2=2))
    return FCheck(residual, trace2, trace3, herm)
