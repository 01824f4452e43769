"""Small unconstrained minimizers: Nelder-Mead, BFGS and safeguarded Newton.

The objectives here are cheap 2-D functions with only finite-difference
gradients available, so the routines favour robustness over speed. All of
them are deterministic and return an :class:`Outcome`; running out of
iterations is reported through ``success=False``, never raised.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Outcome:
    x: np.ndarray
    fun: float
    nit: int
    nfev: int
    success: bool
    message: str


class _Counted:
    def __init__(self, f):
        self.f = f
        self.n = 0

    def __call__(self, x):
        self.n += 1
        return float(self.f(np.asarray(x, dtype=float)))


def nelder_mead(f, x0, steps, *, alpha=1.0, gamma=2.0, rho=0.5, sigma=0.5,
                xatol=1e-6, fatol=1e-10, maxiter=500) -> Outcome:
    """Downhill simplex with the standard reflection/expansion/contraction/shrink.

    The initial simplex is ``x0`` plus one vertex per coordinate displaced by
    ``steps[i]``. Stops when the simplex diameter drops below ``xatol`` or the
    spread of vertex values below ``fatol``.
    """
    fc = _Counted(f)
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    simplex = np.vstack([x0] + [x0 + steps[i] * np.eye(n)[i] for i in range(n)])
    values = np.array([fc(v) for v in simplex])

    message = "iteration limit reached"
    success = False
    nit = 0
    for nit in range(1, maxiter + 1):
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]

        diameter = max(np.linalg.norm(a - b) for a in simplex for b in simplex)
        if diameter < xatol:
            success, message = True, "simplex diameter below tolerance"
            break
        if values[-1] - values[0] < fatol:
            success, message = True, "function spread below tolerance"
            break

        centroid = simplex[:-1].mean(axis=0)
        xr = centroid + alpha * (centroid - simplex[-1])
        fr = fc(xr)
        if fr < values[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = fc(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
        elif fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            if fr < values[-1]:
                xc = centroid + rho * (xr - centroid)
            else:
                xc = centroid + rho * (simplex[-1] - centroid)
            fcon = fc(xc)
            if fcon < min(fr, values[-1]):
                simplex[-1], values[-1] = xc, fcon
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + sigma * (simplex[i] - simplex[0])
                    values[i] = fc(simplex[i])

    best = int(np.argmin(values))
    return Outcome(simplex[best].copy(), float(values[best]), nit, fc.n, success, message)


def _backtrack(fc, x, fx, g, p, *, c1=1e-4, shrink=0.5, max_halvings=60):
    """Armijo backtracking along ``p``; returns ``(t, f(x + t p))`` or ``(0, fx)``."""
    slope = float(g @ p)
    t = 1.0
    for _ in range(max_halvings):
        ft = fc(x + t * p)
        if ft <= fx + c1 * t * slope:
            return t, ft
        t *= shrink
    return 0.0, fx


def bfgs(f, grad, x0, *, gtol=1e-9, xtol=1e-12, maxiter=500, max_step=0.25) -> Outcome:
    """BFGS with an inverse-Hessian update and Armijo backtracking.

    ``max_step`` caps the length of a trial step, which keeps the first
    iterations (identity metric) from leaving the region of interest.
    """
    fc = _Counted(f)
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    fx = fc(x)
    g = np.asarray(grad(x), dtype=float)
    hinv = np.eye(n)
    message, success, nit = "iteration limit reached", False, 0
    for nit in range(1, maxiter + 1):
        if np.linalg.norm(g) < gtol:
            success, message = True, "gradient below tolerance"
            break
        p = -hinv @ g
        if g @ p >= 0.0:
            hinv = np.eye(n)
            p = -g
        length = np.linalg.norm(p)
        if length > max_step:
            p *= max_step / length
        t, fnew = _backtrack(fc, x, fx, g, p)
        if t == 0.0:
            success, message = True, "line search made no progress"
            break
        s = t * p
        x_new = x + s
        g_new = np.asarray(grad(x_new), dtype=float)
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            v = np.eye(n) - rho * np.outer(s, y)
            hinv = v @ hinv @ v.T + rho * np.outer(s, s)
        x, fx, g = x_new, fnew, g_new
        if np.linalg.norm(s) < xtol:
            success, message = True, "step below tolerance"
            break
    return Outcome(x, fx, nit, fc.n, success, message)


def fd_hessian(grad, x, h=1e-4) -> np.ndarray:
    """Central-difference Hessian of a gradient callable, symmetrized."""
    x = np.asarray(x, dtype=float)
    n = x.size
    hess = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        hess[:, j] = (np.asarray(grad(x + e)) - np.asarray(grad(x - e))) / (2.0 * h)
    return 0.5 * (hess + hess.T)


def newton(f, grad, x0, *, hessian=None, gtol=1e-9, xtol=1e-12, maxiter=500,
           max_step=0.25, min_curvature=1e-8) -> Outcome:
    """Newton iteration on a finite-difference Hessian.

    When the Hessian is not safely positive definite the step falls back to
    steepest descent; either way the step length comes from Armijo
    backtracking.
    """
    fc = _Counted(f)
    hessian = hessian or (lambda z: fd_hessian(grad, z))
    x = np.asarray(x0, dtype=float).copy()
    fx = fc(x)
    message, success, nit = "iteration limit reached", False, 0
    for nit in range(1, maxiter + 1):
        g = np.asarray(grad(x), dtype=float)
        if np.linalg.norm(g) < gtol:
            success, message = True, "gradient below tolerance"
            break
        hess = hessian(x)
        eig = np.linalg.eigvalsh(hess)
        if eig[0] > min_curvature * max(1.0, abs(eig[-1])):
            p = -np.linalg.solve(hess, g)
        else:
            p = -g
        length = np.linalg.norm(p)
        if length > max_step:
            p *= max_step / length
        t, fnew = _backtrack(fc, x, fx, g, p)
        if t == 0.0 and not np.array_equal(p, -g):
            p = -g * min(1.0, max_step / np.linalg.norm(g))
            t, fnew = _backtrack(fc, x, fx, g, p)
        if t == 0.0:
            success, message = True, "line search made no progress"
            break
        s = t * p
        x, fx = x + s, fnew
        if np.linalg.norm(s) < xtol:
            success, message = True, "step below tolerance"
            break
    return Outcome(x, fx, nit, fc.n, success, message)
