"""Conjugate gradient with an inverse-factor split preconditioner.

The preconditioner is a sparse factor ``L`` with ``L L' ~ inv(Theta)`` in
ordering coordinates, so applying it is two sparse matrix-vector products
wrapped in the permutation; no triangular solves are needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConvergenceError


@dataclass
class SolveReport:
    """Outcome of one conjugate-gradient solve."""

    solution: np.ndarray
    iterations: int
    residual_history: list
    converged: bool


def _as_operator(apply_theta):
    if callable(apply_theta):
        return apply_theta
    mat = np.asarray(apply_theta, dtype=float)
    return lambda v: mat @ v


def factor_preconditioner(factor):
    """Application of ``inv(M) = P' L L' P`` for a sparse inverse factor."""
    L = factor.matrix
    perm = factor.perm

    def apply(r):
        z_perm = L @ (L.T @ r[perm])
        z = np.empty_like(z_perm)
        z[perm] = z_perm
        return z

    return apply


def pcg_solve(apply_theta, y, precond=None, tol=1e-12, max_iter=None):
    """Preconditioned conjugate gradient for ``Theta x = y``.

    ``apply_theta`` is a matrix or a matvec callable; ``precond`` is a
    sparse inverse factor (or ``None`` for plain conjugate gradient).
    Terminates when the residual norm relative to ``norm(y)`` drops to
    ``tol`` or after ``max_iter`` iterations (default ``10 n``).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    operator = _as_operator(apply_theta)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    max_iter = 10 * n if max_iter is None else int(max_iter)
    apply_m = factor_preconditioner(precond) if precond is not None else (
        lambda r: r)

    norm_y = np.linalg.norm(y)
    if norm_y == 0:
        return SolveReport(solution=np.zeros(n), iterations=0,
                           residual_history=[0.0], converged=True)

    x = np.zeros(n)
    r = y.copy()
    z = apply_m(r)
    p = z.copy()
    rz = float(r @ z)
    history = [float(np.linalg.norm(r) / norm_y)]
    converged = history[-1] <= tol
    iterations = 0
    while not converged and iterations < max_iter:
        ap = operator(p)
        denom = float(p @ ap)
        if not np.isfinite(denom) or denom <= 0:
            raise ConvergenceError(
                "conjugate gradient broke down (operator not positive "
                f"definite or non-finite: p'Ap = {denom!r})")
        alpha = rz / denom
        x += alpha * p
        r -= alpha * ap
        iterations += 1
        rel = float(np.linalg.norm(r) / norm_y)
        if not np.isfinite(rel):
            raise ConvergenceError("conjugate gradient diverged "
                                   "(non-finite residual)")
        history.append(rel)
        if rel <= tol:
            converged = True
            break
        z = apply_m(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return SolveReport(solution=x, iterations=iterations,
                       residual_history=history, converged=converged)
