"""Small dense SQP solver for inequality-constrained problems.

Minimizes ``f(x)`` subject to ``c(x) >= 0`` using a damped-BFGS Hessian
approximation, an active-set QP subproblem solved by enumeration (fine for a
handful of variables and constraints) and an L1 exact-penalty line search.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class SqpResult:
    x: np.ndarray
    fun: float
    max_violation: float
    iterations: int
    converged: bool


def solve_qp(B, g, A, c, tol=1e-12):
    """Solve ``min 0.5 d'Bd + g'd  s.t.  A d + c >= 0`` for positive definite ``B``.

    Returns ``(d, lam)`` or ``(None, None)`` when the linearized constraints
    admit no KKT point.
    """
    n = len(g)
    m = len(c)
    for k in range(min(n, m) + 1):
        for active in itertools.combinations(range(m), k):
            S = list(active)
            if k:
                As = A[S]
                K = np.zeros((n + k, n + k))
                K[:n, :n] = B
                K[:n, n:] = -As.T
                K[n:, :n] = As
                rhs = np.concatenate([-g, -c[S]])
            else:
                K, rhs = B, -g
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(sol)):
                continue
            d, lam_s = sol[:n], sol[n:]
            if np.any(lam_s < -tol):
                continue
            if m and np.any(A @ d + c < -tol * (1.0 + np.abs(c))):
                continue
            # B is positive definite, so the first KKT point found is the solution
            lam = np.zeros(m)
            lam[S] = lam_s
            return d, lam
    return None, None


def minimize(
    f: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    cons: Callable[[np.ndarray], np.ndarray],
    cons_jac: Callable[[np.ndarray], np.ndarray],
    x0,
    max_iter: int = 100,
    xtol: float = 1e-12,
    ctol: float = 1e-10,
) -> SqpResult:
    x = np.asarray(x0, dtype=float).copy()
    n = len(x)
    B = np.eye(n)
    mu = 1.0
    lam = np.zeros(len(cons(x)))

    def merit(z):
        return f(z) + mu * np.sum(np.maximum(0.0, -cons(z)))

    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        g = grad(x)
        c = cons(x)
        A = cons_jac(x)
        d, lam_new = solve_qp(B, g, A, c)
        if d is None:
            # linearization inconsistent: take a least-squares restoration step
            viol = c < 0
            d = np.linalg.lstsq(A[viol], -c[viol], rcond=None)[0]
            lam_new = np.zeros_like(c)
        lam = lam_new
        if np.linalg.norm(d) <= xtol * (1.0 + np.linalg.norm(x)):
            converged = True
            break
        mu = max(mu, 2.0 * float(np.max(np.abs(lam), initial=0.0)) + 1e-3)
        phi0 = merit(x)
        slope = g @ d - mu * np.sum(np.maximum(0.0, -c))
        step = 1.0
        while step > 1e-10:
            if merit(x + step * d) <= phi0 + 1e-4 * step * min(slope, 0.0):
                break
            step *= 0.5
        x_new = x + step * d
        s = x_new - x
        grad_lag = lambda z: grad(z) - cons_jac(z).T @ lam  # noqa: E731
        y = grad_lag(x_new) - grad_lag(x)
        Bs = B @ s
        sBs = s @ Bs
        sy = s @ y
        if sBs > 1e-300:
            if sy < 0.2 * sBs:
                theta = 0.8 * sBs / (sBs - sy)
                y = theta * y + (1.0 - theta) * Bs
                sy = s @ y
            if sy > 1e-300:
                B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
        x = x_new
        if np.linalg.norm(s) <= xtol * (1.0 + np.linalg.norm(x)) and np.min(cons(x), initial=0.0) >= -ctol:
            converged = True
            break
    c = cons(x)
    return SqpResult(
        x=x,
        fun=float(f(x)),
        max_violation=float(max(0.0, -np.min(c, initial=0.0))),
        iterations=it,
        converged=converged,
    )
