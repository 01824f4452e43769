"""Shooting solution of the two-point boundary value problem.

An initial point ``(u, phi_u)`` on the unit disc fixes every unknown initial
value. Integrating forward and scanning scaled time for the smallest
final-condition residual gives the error ``D(u, phi_u)`` and the conversion
time ``Xi``; the time-optimal protocol is a zero of ``D``.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from . import optimize
from .dynamics import DEFAULT_STEP, Trajectory, XiGrid, integrate
from .errors import DomainError

XI_MAX = 5.0
THRESHOLD = 1e-3
FD_EPS = 1e-6
XI_TOL = 1e-8
MAXITER = 500
TWO_PI = 2.0 * math.pi
INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class InitialPoint:
    """Polar coordinates of ``(u1(0), u2(0))`` on the unit disc."""

    u: float
    phi_u: float

    def __post_init__(self):
        slack = 1e-12
        if not (math.isfinite(self.u) and math.isfinite(self.phi_u)):
            raise DomainError("initial point must be finite")
        if not -slack <= self.u <= 1.0 + slack:
            raise DomainError(f"u={self.u} outside [0, 1]")
        if not -slack <= self.phi_u <= TWO_PI + slack:
            raise DomainError(f"phi_u={self.phi_u} outside [0, 2pi]")

    def __iter__(self):
        yield self.u
        yield self.phi_u

    def mirrored(self) -> "InitialPoint":
        """The point related by ``phi_u -> 2 pi - phi_u``, which has the same D."""
        return InitialPoint(self.u, TWO_PI - self.phi_u)


def fold(x) -> tuple[InitialPoint, float]:
    """Map an unconstrained ``(u, phi_u)`` into the domain.

    Negative radii are the same physical point at ``phi_u + pi``; radii above
    one are reflected at ``u = 1``; the angle is wrapped into ``[0, 2 pi)``.
    The second return value is ``du_folded/du``, which is +-1.
    """
    u, phi = float(x[0]), float(x[1])
    sign = 1.0
    for _ in range(64):
        if u < 0.0:
            u, phi, sign = -u, phi + math.pi, -sign
        elif u > 1.0:
            u, sign = 2.0 - u, -sign
        else:
            break
    phi = math.fmod(phi, TWO_PI)
    if phi < 0.0:
        phi += TWO_PI
    return InitialPoint(u, phi), sign


class Method(str, Enum):
    NELDER_MEAD = "nelder-mead"
    BFGS = "bfgs"
    NEWTON = "newton"


@dataclass(frozen=True)
class ShootingResult:
    x_star: InitialPoint
    xi_qb: float
    d_error: float
    converged: bool
    method: Method
    nit: int = 0
    nfev: int = 0

    @property
    def t_qb(self) -> float:
        """Conversion time in units of hbar/E."""
        return self.x_star.u ** 2 * self.xi_qb ** 2

    def as_dict(self) -> dict:
        return {
            "u": self.x_star.u,
            "phi_u": self.x_star.phi_u,
            "xi_qb": self.xi_qb,
            "d_error": self.d_error,
            "method": self.method.value,
            "converged": self.converged,
            "t_qb_hbar_over_E": self.t_qb,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.as_dict(), fh, indent=2)
            fh.write("\n")


@dataclass
class ScanMap:
    """Error landscape on ``u = i/n``, ``phi_u = 2 pi j/n``; arrays are indexed [i, j]."""

    u: np.ndarray
    phi_u: np.ndarray
    d: np.ndarray
    xi_star: np.ndarray
    minimized: bool = False
    u_star: np.ndarray | None = None
    phi_star: np.ndarray | None = None
    converged: np.ndarray | None = None
    basin: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def argmin(self) -> tuple[int, int]:
        flat = int(np.argmin(self.d))
        return np.unravel_index(flat, self.d.shape)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = ["u", "phi_u", "D", "xi_star"]
            if self.minimized:
                header += ["u_star", "phi_star", "converged", "basin"]
            writer.writerow(header)
            for i, u in enumerate(self.u):
                for j, phi in enumerate(self.phi_u):
                    row = [f"{u:.17g}", f"{phi:.17g}",
                           f"{self.d[i, j]:.17g}", f"{self.xi_star[i, j]:.17g}"]
                    if self.minimized:
                        row += [f"{self.u_star[i, j]:.17g}", f"{self.phi_star[i, j]:.17g}",
                                int(self.converged[i, j]), int(self.basin[i, j])]
                    writer.writerow(row)


def _deviation_rows(states: np.ndarray) -> np.ndarray:
    s = np.atleast_2d(states)
    return np.stack([
        s[:, 1],
        s[:, 0] - s[:, 3],
        s[:, 2] - s[:, 5],
        s[:, 7],
        s[:, 8],
        s[:, 6] - s[:, 9],
    ], axis=1)


def deviation_vector(traj: Trajectory, xi: float) -> np.ndarray:
    """Residuals of the six final conditions at scaled time ``xi``."""
    if not 0.0 <= xi <= traj.grid.xi_max:
        raise DomainError(f"xi={xi} outside [0, {traj.grid.xi_max}]")
    return _deviation_rows(traj.at(xi))[0]


def _golden_section(fun, a, b, tol):
    c = b - INV_GOLDEN * (b - a)
    d = a + INV_GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_GOLDEN * (b - a)
            fd = fun(d)
    return (c, fc) if fc <= fd else (d, fd)


def inner_minimum(traj: Trajectory, refine: bool = True) -> tuple[float, float]:
    """``(min_xi |d(xi)|, argmin)`` over the trajectory's whole grid.

    A pass over the stored nodes picks the best node (earliest on ties);
    the bracketing cells are then searched by golden section on the Hermite
    interpolant. The refined value is only accepted if it is lower.
    """
    norms = np.linalg.norm(_deviation_rows(traj.states), axis=1)
    k = int(np.argmin(norms))
    best_xi, best_d = float(traj.xi[k]), float(norms[k])
    if not refine:
        return best_d, best_xi
    lo = traj.xi[max(k - 1, 0)]
    hi = traj.xi[min(k + 1, traj.grid.n_steps)]
    xi_r, d_r = _golden_section(
        lambda z: float(np.linalg.norm(_deviation_rows(traj.at(z))[0])), lo, hi, XI_TOL)
    if d_r < best_d:
        return d_r, float(xi_r)
    return best_d, best_xi


@lru_cache(maxsize=8192)
def _evaluate(u: float, phi_u: float, xi_max: float, step: float):
    traj = integrate((u, phi_u), XiGrid.with_step(xi_max, step))
    d, xi = inner_minimum(traj)
    vec = deviation_vector(traj, xi)
    return d, xi, tuple(vec)


def error_D(x0, xi_max: float = XI_MAX, step: float = DEFAULT_STEP) -> tuple[float, float]:
    """Error ``D`` and its minimizing scaled time for the initial point ``x0``."""
    x0 = x0 if isinstance(x0, InitialPoint) else InitialPoint(*x0)
    d, xi, _ = _evaluate(x0.u, x0.phi_u, float(xi_max), float(step))
    return d, xi


def forward_gradient(vec_fun, x, eps: float, upper=None) -> np.ndarray:
    """Gradient of ``|v(x)|`` from forward differences of the vector ``v``.

    Each partial is ``v . dv_j / |v|`` with ``dv_j = (v(x + eps e_j) - v(x)) / eps``.
    When ``x_j + eps`` would exceed ``upper[j]`` the difference is taken
    backwards instead.
    """
    x = np.asarray(x, dtype=float)
    v0 = np.asarray(vec_fun(x), dtype=float)
    norm = np.linalg.norm(v0)
    g = np.zeros(x.size)
    if norm == 0.0:
        return g
    for j in range(x.size):
        h = eps
        if upper is not None and x[j] + eps > upper[j]:
            h = -eps
        xj = x.copy()
        xj[j] += h
        dv = (np.asarray(vec_fun(xj), dtype=float) - v0) / h
        g[j] = float(v0 @ dv) / norm
    return g


def grad_D(x0, eps: float = FD_EPS, xi_max: float = XI_MAX,
           step: float = DEFAULT_STEP) -> np.ndarray:
    """``(dD/du, dD/dphi_u)`` by finite differences of the deviation vector."""
    if eps <= 0.0:
        raise DomainError("eps must be positive")
    x0 = x0 if isinstance(x0, InitialPoint) else InitialPoint(*x0)

    def vec(z):
        return _evaluate(float(z[0]), float(z[1]), float(xi_max), float(step))[2]

    return forward_gradient(vec, np.array([x0.u, x0.phi_u]), eps, upper=(1.0, TWO_PI))


def minimize(x_init, method: Method | str = Method.NELDER_MEAD, xi_max: float = XI_MAX,
             *, maxiter: int = MAXITER, step: float = DEFAULT_STEP,
             eps: float = FD_EPS) -> ShootingResult:
    """Local minimum of ``D`` from ``x_init`` with the chosen method.

    The search runs over unconstrained coordinates that are folded back into
    the disc (see :func:`fold`) before every evaluation.
    """
    method = Method(method)
    x_init = x_init if isinstance(x_init, InitialPoint) else InitialPoint(*x_init)

    def f(z):
        p, _ = fold(z)
        return error_D(p, xi_max, step)[0]

    def g(z):
        p, sign = fold(z)
        gp = grad_D(p, eps, xi_max, step)
        return np.array([sign * gp[0], gp[1]])

    start = np.array([x_init.u, x_init.phi_u])
    if method is Method.NELDER_MEAD:
        out = optimize.nelder_mead(f, start, (0.05, 0.05 * math.pi), maxiter=maxiter)
    elif method is Method.BFGS:
        out = optimize.bfgs(f, g, start, maxiter=maxiter)
    else:
        out = optimize.newton(f, g, start, maxiter=maxiter)

    x_star, _ = fold(out.x)
    d, xi = error_D(x_star, xi_max, step)
    return ShootingResult(x_star, xi, d, d < THRESHOLD, method, out.nit, out.nfev)


def basin_label(point: InitialPoint, reference: InitialPoint, tol: float = 1e-2) -> int:
    """0 for ``reference``, 1 for its mirror, -1 otherwise."""
    for label, ref in ((0, reference), (1, reference.mirrored())):
        dphi = abs((point.phi_u - ref.phi_u + math.pi) % TWO_PI - math.pi)
        if abs(point.u - ref.u) < tol and dphi < tol:
            return label
    return -1


def _scan_row(args):
    i, n, xi_max, step, do_min, method, reference = args
    u = i / n
    out = []
    for j in range(n + 1):
        x = InitialPoint(u, TWO_PI * j / n)
        d, xi = error_D(x, xi_max, step)
        if do_min:
            res = minimize(x, method, xi_max, step=step)
            label = basin_label(res.x_star, reference) if res.converged else -1
            out.append((d, xi, res.x_star.u, res.x_star.phi_u, res.converged, label))
        else:
            out.append((d, xi))
    return out


def grid_scan(n: int, xi_max: float = XI_MAX, minimize: bool = False,
              method: Method | str = Method.NELDER_MEAD, *, step: float = DEFAULT_STEP,
              reference: InitialPoint | None = None, jobs: int = 1) -> ScanMap:
    """Evaluate (and optionally minimize from) every point of the polar grid.

    Rows are independent; with ``jobs > 1`` they are farmed out to worker
    processes and reassembled in index order, so the map does not depend
    on ``jobs``.
    """
    if int(n) != n or n < 2:
        raise DomainError("n must be an integer >= 2")
    method = Method(method)
    reference = reference or InitialPoint(0.957, 0.311 * math.pi)
    tasks = [(i, n, float(xi_max), float(step), minimize, method, reference)
             for i in range(n + 1)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_scan_row, tasks))
    else:
        rows = [_scan_row(t) for t in tasks]
    cells = np.array(rows, dtype=float)
    scan = ScanMap(
        u=np.arange(n + 1) / n,
        phi_u=TWO_PI * np.arange(n + 1) / n,
        d=cells[:, :, 0],
        xi_star=cells[:, :, 1],
        minimized=minimize,
        meta={"n": n, "xi_max": xi_max, "method": method.value if minimize else None},
    )
    if minimize:
        scan.u_star = cells[:, :, 2]
        scan.phi_star = cells[:, :, 3]
        scan.converged = cells[:, :, 4].astype(bool)
        scan.basin = cells[:, :, 5].astype(int)
    return scan


@dataclass(frozen=True)
class XiMaxRow:
    xi_max: float
    d_min: float
    xi: float
    x_star: InitialPoint

    def as_dict(self) -> dict:
        return {"xi_max": self.xi_max, "d_min": self.d_min, "xi": self.xi,
                "u": self.x_star.u, "phi_u": self.x_star.phi_u,
                "t_hbar_over_E": self.x_star.u ** 2 * self.xi ** 2}


def multistart_points(n: int = 8) -> list[InitialPoint]:
    """Cell centres of an ``n x n`` polar grid over the disc."""
    return [InitialPoint((i + 0.5) / n, TWO_PI * (j + 0.5) / n)
            for i in range(n) for j in range(n)]


def _select(results: list[ShootingResult]) -> ShootingResult:
    good = [r for r in results if r.converged]
    if not good:
        return min(results, key=lambda r: r.d_error)
    # shortest physical time wins; within that cluster keep phi_u <= pi
    t_best = min(r.t_qb for r in good)
    fastest = [r for r in good if r.t_qb - t_best < 1e-3]
    return min(fastest, key=lambda r: (r.x_star.phi_u > math.pi, r.d_error))


def _minimize_task(args):
    x, method, xi_max, step = args
    return minimize(x, method, xi_max, step=step)


def global_minimum(xi_max: float = XI_MAX, *, starts: int = 8,
                   method: Method | str = Method.NELDER_MEAD,
                   step: float = DEFAULT_STEP, jobs: int = 1,
                   polish: Method | str | None = None) -> ShootingResult:
    """Best result of :func:`minimize` over a ``starts x starts`` multistart grid.

    Converged runs can land on several exact solutions with different
    conversion times; the one with the shortest physical time ``u^2 Xi^2``
    is returned. If nothing converges the smallest ``D`` is returned.
    With ``polish`` the winner is refined once more by that method and the
    refinement kept only if it lowers ``D``.
    """
    method = Method(method)
    tasks = [(x, method, float(xi_max), float(step)) for x in multistart_points(starts)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_minimize_task, tasks))
    else:
        results = [_minimize_task(t) for t in tasks]
    best = _select(results)
    if polish is not None:
        refined = minimize(best.x_star, polish, xi_max, step=step)
        if refined.d_error < best.d_error:
            best = refined
    return best


def verify_xi_max(xi_values, **kwargs) -> list[XiMaxRow]:
    """Global minimum of ``D`` and its ``Xi`` for each upper bound in ``xi_values``."""
    xi_values = [float(v) for v in xi_values]
    if not xi_values or any(v <= 0.0 for v in xi_values):
        raise DomainError("xi_values must be a non-empty list of positive bounds")
    rows = []
    for xm in xi_values:
        best = global_minimum(xm, **kwargs)
        rows.append(XiMaxRow(xm, best.d_error, best.xi_qb, best.x_star))
    return rows
