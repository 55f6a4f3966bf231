"""Preconditioned conjugate gradients and right-preconditioned GMRES.

Both solvers start from a zero initial guess and stop on the true
relative l2 residual of the unpreconditioned system, matching the
reporting convention of the stand-alone multigrid loop.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import IndefiniteBreakdown, InvalidParameter, StagnationDetected
from .multigrid import SolveReport

__all__ = ["KrylovConfig", "pcg", "gmres"]

_TRUE_RESIDUAL_EVERY = 50
_STAGNATION_WINDOW = 50
_STAGNATION_REDUCTION = 1e-3


@dataclass(frozen=True)
class KrylovConfig:
    """Method selection and stopping parameters.

    ``restart`` applies to GMRES only; 0 means unrestarted.
    """

    method: str = "cg"
    tol: float = 1e-11
    maxit: int = 500
    restart: int = 0

    def __post_init__(self):
        if self.method not in ("cg", "gmres"):
            raise InvalidParameter(f"unknown Krylov method {self.method!r}")
        if not 0.0 < self.tol < 1.0:
            raise InvalidParameter(f"tol must lie in (0, 1), got {self.tol}")
        if self.maxit < 1:
            raise InvalidParameter("maxit must be at least 1")
        if self.restart < 0:
            raise InvalidParameter("restart must be non-negative")


def _identity_precond(r: np.ndarray) -> np.ndarray:
    return r


def pcg(a, b, precond, config: KrylovConfig) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned conjugate gradients for an SPD operator.

    The preconditioner must be a fixed symmetric linear operator; a
    preconditioner object that declares ``symmetric = False`` is
    rejected up front, and non-positive curvature or a non-positive
    preconditioned inner product raises
    :class:`IndefiniteBreakdown` during the iteration.  The recurrence
    residual is refreshed from ``b - A x`` every 50 iterations and
    convergence is confirmed on the true residual.
    """
    if precond is None:
        precond = _identity_precond
    elif getattr(precond, "symmetric", True) is False:
        raise IndefiniteBreakdown(
            "CG requires a symmetric preconditioner; use the symmetric "
            "Gauss-Seidel pairing or Jacobi smoothing"
        )
    n = a.shape[0]
    if n <= 500:
        asym = abs(a - a.T)
        if asym.nnz and asym.max() > 1e-10 * abs(a).max():
            raise IndefiniteBreakdown("matrix is not symmetric")

    start = time.perf_counter()
    b = np.asarray(b, dtype=float)
    x = np.zeros(n)
    b_norm = np.linalg.norm(b)
    residuals = [1.0]
    if b_norm == 0.0:
        return x, SolveReport(0, residuals, True, time.perf_counter() - start)

    r = b.copy()
    z = precond(r)
    p = z.copy()
    rho = float(r @ z)
    if rho <= 0.0:
        raise IndefiniteBreakdown("preconditioned inner product is not positive")

    converged = False
    iterations = 0
    for iterations in range(1, config.maxit + 1):
        q = a @ p
        curvature = float(p @ q)
        if curvature <= 0.0:
            raise IndefiniteBreakdown(
                f"non-positive curvature p^T A p = {curvature:.3e}"
            )
        alpha = rho / curvature
        x += alpha * p
        if iterations % _TRUE_RESIDUAL_EVERY == 0:
            r = b - a @ x
        else:
            r -= alpha * q
        rel = np.linalg.norm(r) / b_norm
        if rel <= config.tol:
            true_rel = np.linalg.norm(b - a @ x) / b_norm
            residuals.append(float(true_rel))
            if true_rel <= config.tol:
                converged = True
                break
            r = b - a @ x
        else:
            residuals.append(float(rel))
        z = precond(r)
        rho_next = float(r @ z)
        if rho_next <= 0.0:
            raise IndefiniteBreakdown("preconditioned inner product is not positive")
        p = z + (rho_next / rho) * p
        rho = rho_next
    return x, SolveReport(
        iterations=iterations,
        residuals=residuals,
        converged=converged,
        wall_time=time.perf_counter() - start,
        operator_complexity=getattr(precond, "operator_complexity", 1.0),
    )


def _gmres_cycle(a, precond, b, x0, b_norm, tol, max_steps, residuals):
    """One (possibly full-length) right-preconditioned Arnoldi cycle.

    Returns (x, converged).  With right preconditioning the rotated
    residual norm is the true residual of the unpreconditioned system.
    """
    n = b.shape[0]
    r0 = b - a @ x0
    beta = np.linalg.norm(r0)
    if beta == 0.0:
        return x0, True

    v = np.zeros((max_steps + 1, n))
    h = np.zeros((max_steps + 1, max_steps))
    cs = np.zeros(max_steps)
    sn = np.zeros(max_steps)
    g = np.zeros(max_steps + 1)
    g[0] = beta
    v[0] = r0 / beta

    k_used = 0
    converged = False
    for k in range(max_steps):
        w = a @ precond(v[k])
        for i in range(k + 1):  # modified Gram-Schmidt
            h[i, k] = w @ v[i]
            w -= h[i, k] * v[i]
        h[k + 1, k] = np.linalg.norm(w)
        lucky_breakdown = h[k + 1, k] == 0.0
        if not lucky_breakdown:
            v[k + 1] = w / h[k + 1, k]
        for i in range(k):
            t = cs[i] * h[i, k] + sn[i] * h[i + 1, k]
            h[i + 1, k] = -sn[i] * h[i, k] + cs[i] * h[i + 1, k]
            h[i, k] = t
        denom = np.hypot(h[k, k], h[k + 1, k])
        cs[k] = h[k, k] / denom
        sn[k] = h[k + 1, k] / denom
        h[k, k] = denom
        h[k + 1, k] = 0.0
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]

        k_used = k + 1
        rel = abs(g[k + 1]) / b_norm
        residuals.append(float(rel))
        m = len(residuals) - 1
        if (
            m > _STAGNATION_WINDOW
            and residuals[-1]
            > residuals[-1 - _STAGNATION_WINDOW] * (1.0 - _STAGNATION_REDUCTION)
        ):
            raise StagnationDetected(
                f"residual reduced by less than {_STAGNATION_REDUCTION:.0e} "
                f"over the last {_STAGNATION_WINDOW} iterations"
            )
        if rel <= tol or lucky_breakdown:
            converged = rel <= tol
            break

    # h is upper triangular after the rotations
    y = np.linalg.solve(h[:k_used, :k_used], g[:k_used])
    x = x0 + precond(v[:k_used].T @ y)
    return x, converged


def gmres(k, b, precond, config: KrylovConfig) -> tuple[np.ndarray, SolveReport]:
    """Right-preconditioned GMRES with modified Gram-Schmidt Arnoldi.

    Unrestarted by default (``config.restart == 0``); because the
    preconditioner is applied on the right, the reported residual is
    the true system residual and is monotone within each Arnoldi cycle.
    """
    if precond is None:
        precond = _identity_precond

    start = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = k.shape[0]
    x = np.zeros(n)
    b_norm = np.linalg.norm(b)
    residuals = [1.0]
    if b_norm == 0.0:
        return x, SolveReport(0, residuals, True, time.perf_counter() - start)

    converged = False
    while len(residuals) - 1 < config.maxit and not converged:
        remaining = config.maxit - (len(residuals) - 1)
        steps = remaining if config.restart == 0 else min(config.restart, remaining)
        x, converged = _gmres_cycle(
            k, precond, b, x, b_norm, config.tol, steps, residuals
        )

    true_rel = np.linalg.norm(b - k @ x) / b_norm
    residuals[-1] = float(true_rel)
    converged = true_rel <= config.tol
    return x, SolveReport(
        iterations=len(residuals) - 1,
        residuals=residuals,
        converged=converged,
        wall_time=time.perf_counter() - start,
        operator_complexity=getattr(precond, "operator_complexity", 1.0),
    )
