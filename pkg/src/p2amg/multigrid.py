"""Recursive V/W multigrid cycles, the stand-alone solver loop, and the
preconditioner interface for Krylov methods.

A cycle at level ``l`` runs ``m_pre`` smoothing sweeps, restricts the
residual with the transpose of the prolongation, recurses ``nu`` times
(from a zero coarse guess, so a preconditioner application is a fixed
linear operator), prolongates the correction and runs ``m_post``
sweeps.  The coarsest level is solved directly.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .coarsening import Hierarchy
from .errors import DivergenceDetected, InvalidParameter
from .smoothers import SmootherConfig, SmootherKind, make_smoother
from .sparse_core import coarse_solve

__all__ = [
    "CycleConfig",
    "SolveReport",
    "build_level_smoothers",
    "amg_cycle",
    "solve_amg",
    "apply_preconditioner",
    "Preconditioner",
]

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class CycleConfig:
    """Cycle shape: smoother, nu (1 = V, 2 = W), cycles per application."""

    smoother: SmootherConfig
    nu: int = 1
    cycles_per_application: int = 1

    def __post_init__(self):
        if self.nu not in (1, 2):
            raise InvalidParameter(f"nu must be 1 (V) or 2 (W), got {self.nu}")
        if self.cycles_per_application < 1:
            raise InvalidParameter("cycles_per_application must be at least 1")

    @property
    def cycle_name(self) -> str:
        base = "V" if self.nu == 1 else "W"
        if self.cycles_per_application == 1:
            return base
        return f"{self.cycles_per_application}x{base}"


@dataclass
class SolveReport:
    """Iteration count, relative-residual history, and level statistics."""

    iterations: int
    residuals: list[float]
    converged: bool
    wall_time: float
    operator_complexity: float = 1.0

    @property
    def final_residual(self) -> float:
        return self.residuals[-1]

    def csv_row(self, **extra) -> dict:
        row = dict(extra)
        row.update(
            iterations=self.iterations,
            converged=self.converged,
            final_residual=self.final_residual,
            operator_complexity=self.operator_complexity,
            wall_ms=1e3 * self.wall_time,
        )
        return row


def build_level_smoothers(hierarchy: Hierarchy, config: CycleConfig) -> list:
    """Smoother state for levels 0..L-1 (the coarsest is solved directly)."""
    return [
        make_smoother(lv.operator, lv.layout, config.smoother)
        for lv in hierarchy.levels[:-1]
    ]


def amg_cycle(
    hierarchy: Hierarchy,
    level: int,
    x: np.ndarray,
    b: np.ndarray,
    config: CycleConfig,
    smoothers: list | None = None,
) -> np.ndarray:
    """One multigrid cycle on ``K_level x = b`` starting from ``x``.

    Mutates and returns ``x`` (except on the coarsest level, which is
    solved exactly regardless of the passed iterate).
    """
    last = hierarchy.n_levels - 1
    if not 0 <= level <= last:
        raise InvalidParameter(f"level {level} outside 0..{last}")
    if level == last:
        return coarse_solve(hierarchy.coarse, b)
    if smoothers is None:
        smoothers = build_level_smoothers(hierarchy, config)

    lv = hierarchy.levels[level]
    sm = smoothers[level]
    cfg = config.smoother

    sm.presmooth(x, b, cfg.m_pre)

    p = lv.prolongation.matrix
    b_coarse = p.T @ (b - lv.operator @ x)
    if level + 1 == last:
        x_coarse = coarse_solve(hierarchy.coarse, b_coarse)
    else:
        x_coarse = np.zeros(p.shape[1])
        for _ in range(config.nu):
            x_coarse = amg_cycle(
                hierarchy, level + 1, x_coarse, b_coarse, config, smoothers
            )
    x += p @ x_coarse

    sm.postsmooth(x, b, cfg.m_post)
    return x


def solve_amg(
    hierarchy: Hierarchy,
    b: np.ndarray,
    config: CycleConfig,
    tol: float,
    maxit: int = 200,
    smoothers: list | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Stand-alone multigrid iteration from a zero initial guess.

    Stops when the relative l2 residual drops to ``tol`` or after
    ``maxit`` cycles; raises :class:`DivergenceDetected` if the relative
    residual exceeds ``1e6``.
    """
    if not 0.0 < tol < 1.0:
        raise InvalidParameter(f"tol must lie in (0, 1), got {tol}")
    if maxit < 1:
        raise InvalidParameter("maxit must be at least 1")
    cfg = config.smoother
    if hierarchy.n_levels > 1 and cfg.m_pre + cfg.m_post < 1:
        raise InvalidParameter("a multi-level solve needs at least one sweep")

    start = time.perf_counter()
    op = hierarchy.levels[0].operator
    b = np.asarray(b, dtype=float)
    x = np.zeros(op.shape[0])
    b_norm = np.linalg.norm(b)
    residuals = [1.0]
    if b_norm == 0.0:
        return x, SolveReport(
            iterations=0,
            residuals=residuals,
            converged=True,
            wall_time=time.perf_counter() - start,
            operator_complexity=hierarchy.operator_complexity,
        )

    if smoothers is None:
        smoothers = build_level_smoothers(hierarchy, config)
    converged = False
    iterations = 0
    for iterations in range(1, maxit + 1):
        x = amg_cycle(hierarchy, 0, x, b, config, smoothers)
        rel = np.linalg.norm(b - op @ x) / b_norm
        residuals.append(float(rel))
        if rel > DIVERGENCE_LIMIT or not np.isfinite(rel):
            raise DivergenceDetected(
                f"relative residual {rel:.3e} after {iterations} cycles"
            )
        if rel <= tol:
            converged = True
            break
    return x, SolveReport(
        iterations=iterations,
        residuals=residuals,
        converged=converged,
        wall_time=time.perf_counter() - start,
        operator_complexity=hierarchy.operator_complexity,
    )


def apply_preconditioner(
    hierarchy: Hierarchy,
    r: np.ndarray,
    config: CycleConfig,
    smoothers: list | None = None,
) -> np.ndarray:
    """Apply ``cycles_per_application`` cycles to ``M z = r`` from zero.

    Zero initial guesses on every level make this a fixed linear
    operator in ``r``.
    """
    if smoothers is None:
        smoothers = build_level_smoothers(hierarchy, config)
    z = np.zeros_like(np.asarray(r, dtype=float))
    for _ in range(config.cycles_per_application):
        z = amg_cycle(hierarchy, 0, z, r, config, smoothers)
    return z


class Preconditioner:
    """Callable multigrid preconditioner with cached smoother state."""

    def __init__(self, hierarchy: Hierarchy, config: CycleConfig):
        self.hierarchy = hierarchy
        self.config = config
        self._smoothers = build_level_smoothers(hierarchy, config)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return apply_preconditioner(self.hierarchy, r, self.config, self._smoothers)

    @property
    def symmetric(self) -> bool:
        """Whether the application is a symmetric operator.

        True for Jacobi smoothing and for Gauss-Seidel under the
        symmetric direction policy with matching sweep counts; the
        saddle smoothers are not symmetric in general.
        """
        cfg = self.config.smoother
        if not self.hierarchy.symmetric_operator:
            return False
        if self.hierarchy.n_levels == 1:
            return True
        if cfg.kind is SmootherKind.JACOBI:
            return cfg.m_pre == cfg.m_post
        if cfg.kind is SmootherKind.GAUSS_SEIDEL:
            return cfg.gs_direction == "symmetric" and cfg.m_pre == cfg.m_post
        return False

    @property
    def operator_complexity(self) -> float:
        return self.hierarchy.operator_complexity
