"""Reduced brachistochrone dynamics in scaled time.

The time-optimal W -> GHZ problem reduces to ten real, non-negative moduli
evolved in the dimensionless time ``xi``:

* ``u1, u2, u3``: Rabi-frequency moduli,
* ``w_wr, w_gr, w_gwp``: Lagrange-multiplier (costate) moduli,
* ``psi_g, psi_w, psi_wp, psi_r``: moduli of the state amplitudes on
  ``|ggg>, |W>, |W'>, |rrr>``.

All quantities are measured in units of ``|lambda_Wr(0)|`` so that
``w_wr(0) = 1``. The state vector layout used throughout the package is the
order of :data:`FIELDS`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from numba import njit
from scipy.integrate import solve_ivp

from .errors import DomainError, IntegrationError

FIELDS = ("u1", "u2", "u3", "w_wr", "w_gr", "w_gwp",
          "psi_g", "psi_w", "psi_wp", "psi_r")
INDEX = {name: i for i, name in enumerate(FIELDS)}

TOL_NEG = 1e-9
TOL_NORM = 1e-8
DEFAULT_STEP = 1e-3
ADAPTIVE_TOL = 1e-10


@dataclass(frozen=True)
class ScaledState:
    u1: float
    u2: float
    u3: float
    w_wr: float
    w_gr: float
    w_gwp: float
    psi_g: float
    psi_w: float
    psi_wp: float
    psi_r: float

    @classmethod
    def from_array(cls, values) -> "ScaledState":
        values = np.asarray(values, dtype=float)
        if values.shape != (10,):
            raise DomainError(f"expected 10 values, got shape {values.shape}")
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def clamped(self) -> "ScaledState":
        """Copy with undershoots of at most ``TOL_NEG`` mapped to zero."""
        return ScaledState(*(0.0 if -TOL_NEG <= v < 0.0 else v for v in astuple(self)))

    def drive_power(self) -> float:
        return self.u1 ** 2 + self.u2 ** 2 + self.u3 ** 2

    def costate_power(self) -> float:
        return self.w_wr ** 2 + self.w_gr ** 2 + self.w_gwp ** 2

    def norm_sq(self) -> float:
        return self.psi_g ** 2 + self.psi_w ** 2 + self.psi_wp ** 2 + self.psi_r ** 2

    def violations(self, tol_neg: float = TOL_NEG, tol_norm: float = TOL_NORM) -> list[str]:
        """Names of the invariants this state breaks (empty when valid)."""
        bad = [f.name for f in fields(self) if getattr(self, f.name) < -tol_neg]
        if abs(self.norm_sq() - 1.0) > tol_norm:
            bad.append("norm")
        if abs(self.costate_power() - 1.0) > tol_norm:
            bad.append("costate_power")
        return bad


@dataclass(frozen=True)
class XiGrid:
    """Uniform grid ``0 = xi_0 < ... < xi_N = xi_max``."""

    xi_max: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.xi_max) and self.xi_max > 0.0):
            raise DomainError(f"xi_max must be positive, got {self.xi_max}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError(f"n_steps must be a positive integer, got {self.n_steps}")

    @classmethod
    def with_step(cls, xi_max: float, step: float = DEFAULT_STEP) -> "XiGrid":
        """Smallest uniform grid on ``[0, xi_max]`` whose spacing is <= ``step``."""
        if step <= 0.0:
            raise DomainError("step must be positive")
        return cls(float(xi_max), max(1, math.ceil(xi_max / step - 1e-9)))

    @property
    def step(self) -> float:
        return self.xi_max / self.n_steps

    @property
    def values(self) -> np.ndarray:
        return np.linspace(0.0, self.xi_max, self.n_steps + 1)


def _as_vector(s) -> np.ndarray:
    y = s.as_array() if isinstance(s, ScaledState) else np.asarray(s, dtype=float)
    if y.shape[0] != 10:
        raise DomainError(f"expected 10 state values, got {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise DomainError("state contains non-finite values")
    return y


def rhs_costate(s) -> tuple[float, ...]:
    """Derivatives of ``(u1, u2, u3, w_wr, w_gr, w_gwp)``."""
    u1, u2, u3, w_wr, w_gr, w_gwp = _as_vector(s)[:6]
    return (
        -u2 * w_gwp,
        u1 * w_gwp - u3 * w_wr,
        u2 * w_wr,
        -u1 * w_gr,
        u1 * w_wr - u3 * w_gwp,
        u3 * w_gr,
    )


def rhs_state(s) -> tuple[float, ...]:
    """Derivatives of ``(psi_g, psi_w, psi_wp, psi_r)``."""
    y = _as_vector(s)
    u1, u2, u3 = y[:3]
    pg, pw, pwp, pr = y[6:]
    return (
        u1 * pw,
        -u1 * pg - u2 * pwp,
        u2 * pw - u3 * pr,
        u3 * pwp,
    )


def rhs(s) -> np.ndarray:
    """Full ten-component right-hand side."""
    return np.array(rhs_costate(s) + rhs_state(s))


@njit(cache=True)
def _rhs_into(y, out):
    u1, u2, u3 = y[0], y[1], y[2]
    w_wr, w_gr, w_gwp = y[3], y[4], y[5]
    pg, pw, pwp, pr = y[6], y[7], y[8], y[9]
    out[0] = -u2 * w_gwp
    out[1] = u1 * w_gwp - u3 * w_wr
    out[2] = u2 * w_wr
    out[3] = -u1 * w_gr
    out[4] = u1 * w_wr - u3 * w_gwp
    out[5] = u3 * w_gr
    out[6] = u1 * pw
    out[7] = -u1 * pg - u2 * pwp
    out[8] = u2 * pw - u3 * pr
    out[9] = u3 * pwp


@njit(cache=True)
def rhs_rows(states):
    out = np.empty_like(states)
    for i in range(states.shape[0]):
        _rhs_into(states[i], out[i])
    return out


@njit(cache=True)
def _rk4_path(y0, h, n):
    states = np.empty((n + 1, 10))
    states[0] = y0
    k1 = np.empty(10)
    k2 = np.empty(10)
    k3 = np.empty(10)
    k4 = np.empty(10)
    tmp = np.empty(10)
    for i in range(n):
        y = states[i]
        _rhs_into(y, k1)
        for j in range(10):
            tmp[j] = y[j] + 0.5 * h * k1[j]
        _rhs_into(tmp, k2)
        for j in range(10):
            tmp[j] = y[j] + 0.5 * h * k2[j]
        _rhs_into(tmp, k3)
        for j in range(10):
            tmp[j] = y[j] + h * k3[j]
        _rhs_into(tmp, k4)
        for j in range(10):
            states[i + 1, j] = y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
    return states


class Trajectory:
    """Dense solution of the reduced system on a :class:`XiGrid`.

    ``states[k]`` holds the ten moduli at ``grid.values[k]`` and ``derivs[k]``
    their right-hand side; together they define a C1 piecewise-cubic
    Hermite interpolant used by :meth:`at`. Arrays are read-only.
    """

    def __init__(self, grid: XiGrid, states: np.ndarray, derivs: np.ndarray | None = None):
        states = np.array(states, dtype=float)
        if states.shape != (grid.n_steps + 1, 10):
            raise DomainError(f"states shape {states.shape} does not match grid")
        if derivs is None:
            derivs = rhs_rows(states)
        derivs = np.array(derivs, dtype=float)
        states.flags.writeable = False
        derivs.flags.writeable = False
        self.grid = grid
        self.states = states
        self.derivs = derivs

    def __len__(self):
        return self.states.shape[0]

    def __getitem__(self, k) -> ScaledState:
        return ScaledState.from_array(self.states[k])

    @property
    def xi(self) -> np.ndarray:
        return self.grid.values

    def column(self, name: str) -> np.ndarray:
        return self.states[:, INDEX[name]]

    def at(self, xi) -> np.ndarray:
        """Hermite-interpolated state(s) at scaled time(s) ``xi``.

        A scalar gives a ``(10,)`` array, an array of shape ``(m,)`` gives
        ``(m, 10)``.
        """
        xi_arr = np.asarray(xi, dtype=float)
        scalar = xi_arr.ndim == 0
        xi_arr = np.atleast_1d(xi_arr)
        tol = 1e-12 * max(1.0, self.grid.xi_max)
        if np.any(xi_arr < -tol) or np.any(xi_arr > self.grid.xi_max + tol):
            raise DomainError(f"xi outside [0, {self.grid.xi_max}]")
        h = self.grid.step
        k = np.clip(np.floor(xi_arr / h).astype(int), 0, self.grid.n_steps - 1)
        s = ((xi_arr - k * h) / h)[:, None]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s ** 2 * (3 - 2 * s)
        h11 = s ** 2 * (s - 1)
        out = (h00 * self.states[k] + h10 * h * self.derivs[k]
               + h01 * self.states[k + 1] + h11 * h * self.derivs[k + 1])
        return out[0] if scalar else out

    def truncated(self, xi_end: float) -> "Trajectory":
        """Resample onto a uniform grid ending exactly at ``xi_end``.

        The new grid keeps the original spacing as an upper bound; nodes are
        obtained by Hermite interpolation, derivatives from the RHS.
        """
        grid = XiGrid.with_step(xi_end, self.grid.step)
        return Trajectory(grid, self.at(grid.values))

    def conserved(self) -> dict[str, np.ndarray]:
        """Per-node values of the three quantities that must stay constant."""
        s = self.states
        return {
            "drive_power": np.sum(s[:, 0:3] ** 2, axis=1),
            "costate_power": np.sum(s[:, 3:6] ** 2, axis=1),
            "norm_sq": np.sum(s[:, 6:10] ** 2, axis=1),
        }

    def min_moduli(self) -> np.ndarray:
        return self.states.min(axis=0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("xi",) + FIELDS)
            for x, row in zip(self.xi, self.states):
                writer.writerow([f"{v:.17g}" for v in (x, *row)])


def initial_state(x0) -> np.ndarray:
    """Boundary values at ``xi = 0`` for the polar initial point ``(u, phi_u)``."""
    u, phi_u = (float(v) for v in x0)
    if not (math.isfinite(u) and math.isfinite(phi_u)):
        raise DomainError("initial point must be finite")
    if not (-1e-12 <= u <= 1.0 + 1e-12) or not (-1e-12 <= phi_u <= 2 * math.pi + 1e-12):
        raise DomainError(f"initial point (u={u}, phi_u={phi_u}) outside [0,1]x[0,2pi]")
    y0 = np.zeros(10)
    y0[0] = u * math.cos(phi_u)
    y0[1] = u * math.sin(phi_u)
    y0[3] = 1.0
    y0[7] = 1.0
    return y0


def integrate(x0, grid: XiGrid, adaptive: bool = False) -> Trajectory:
    """Solve the reduced system from the W state for the initial point ``x0``.

    The default is fixed-step classical RK4 on ``grid``. With
    ``adaptive=True`` an embedded Dormand-Prince 8(5,3) pair with
    ``rtol = atol = 1e-10`` is used and its dense output sampled on ``grid``.
    """
    y0 = initial_state(x0)
    if not adaptive:
        return Trajectory(grid, _rk4_path(y0, grid.step, grid.n_steps))
    sol = solve_ivp(lambda t, y: rhs(y), (0.0, grid.xi_max), y0, method="DOP853",
                    rtol=ADAPTIVE_TOL, atol=ADAPTIVE_TOL, t_eval=grid.values)
    if sol.status != 0:
        raise IntegrationError(f"adaptive integration failed: {sol.message}",
                               xi=float(sol.t[-1]) if sol.t.size else 0.0)
    return Trajectory(grid, sol.y.T)
