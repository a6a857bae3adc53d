"""Minimization of the reduced Tikhonov-type functional

    J(u) = ||L u - b||^2 + beta * ||u - F||^2

over the interior grid unknowns. ``J`` is a strictly convex quadratic for
beta > 0; its minimizer solves ``(L^T L + beta I) u = L^T b + beta F``, which
``minimize_cg`` attacks with conjugate gradients using only matvecs with L.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .assembly import AssembledSystem

logger = logging.getLogger(__name__)

DENSE_ORACLE_LIMIT = 2000


@dataclass(frozen=True)
class SolverConfig:
    beta: float = 0.01
    cg_tol: float = 1e-8
    cg_max_iter: Optional[int] = None  # None -> 10 * N_r
    row_normalize: bool = True
    test_mode: bool = False  # allow beta outside (0, 1)

    def __post_init__(self):
        if self.test_mode:
            if not self.beta >= 0:
                raise ValueError(f"beta must be >= 0, got {self.beta}")
        elif not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.cg_tol > 0:
            raise ValueError(f"cg_tol must be > 0, got {self.cg_tol}")
        if self.cg_max_iter is not None and self.cg_max_iter < 1:
            raise ValueError(f"cg_max_iter must be >= 1, got {self.cg_max_iter}")

    def max_iter_for(self, n: int) -> int:
        return self.cg_max_iter if self.cg_max_iter is not None else 10 * n


@dataclass(frozen=True)
class MinimizeResult:
    u_reduced: np.ndarray
    iterations: int
    final_gradient_norm: float
    functional_value: float
    converged: bool
    initial_gradient_norm: float = float("nan")


def _check_length(sys: AssembledSystem, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (sys.n,):
        raise ValueError(f"expected a vector of length {sys.n}, got shape {u.shape}")
    return u


def eval_functional(sys: AssembledSystem, u, beta: float) -> float:
    u = _check_length(sys, u)
    r = sys.L_reduced.matvec(u) - sys.b_reduced
    d = u - sys.F_reduced
    return float(r @ r + beta * (d @ d))


def eval_gradient(sys: AssembledSystem, u, beta: float) -> np.ndarray:
    u = _check_length(sys, u)
    r = sys.L_reduced.matvec(u) - sys.b_reduced
    return 2.0 * sys.L_reduced.rmatvec(r) + 2.0 * beta * (u - sys.F_reduced)


def minimize_cg(sys: AssembledSystem, cfg: SolverConfig, x0=None) -> MinimizeResult:
    """Conjugate gradients on the normal equations, started from ``F`` unless ``x0`` is given.

    Stops once ``||grad J|| <= cg_tol * (1 + ||grad J(x0)||)``. The recursive
    residual is checked against a freshly computed one before stopping; on
    disagreement the iteration restarts from the true residual.
    """
    L, beta = sys.L_reduced, cfg.beta
    rhs = L.rmatvec(sys.b_reduced) + beta * sys.F_reduced

    def apply_a(v):
        return L.rmatvec(L.matvec(v)) + beta * v

    x = sys.F_reduced.copy() if x0 is None else _check_length(sys, x0).copy()
    r = rhs - apply_a(x)
    g0 = 2.0 * float(np.linalg.norm(r))
    target = cfg.cg_tol * (1.0 + g0)
    max_iter = cfg.max_iter_for(sys.n)

    p = r.copy()
    rs = float(r @ r)
    it = 0
    while True:
        if 2.0 * np.sqrt(rs) <= target:
            r = rhs - apply_a(x)
            rs = float(r @ r)
            if 2.0 * np.sqrt(rs) <= target:
                break
            p = r.copy()
        if it >= max_iter:
            break
        ap = apply_a(p)
        curv = float(p @ ap)
        if not curv > 0:
            break
        alpha = rs / curv
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
        it += 1

    grad = eval_gradient(sys, x, beta)
    gnorm = float(np.linalg.norm(grad))
    converged = bool(np.isfinite(gnorm) and gnorm <= target)
    if not converged:
        logger.debug("CG stopped after %d iterations with gradient norm %.3e (target %.3e)", it, gnorm, target)
    return MinimizeResult(
        u_reduced=x,
        iterations=it,
        final_gradient_norm=gnorm,
        functional_value=eval_functional(sys, x, beta),
        converged=converged,
        initial_gradient_norm=g0,
    )


def dense_oracle_solve(sys: AssembledSystem, beta: float) -> np.ndarray:
    """Direct solve of the normal equations with a dense LU factorization (test oracle)."""
    if sys.n > DENSE_ORACLE_LIMIT:
        raise ValueError(f"dense oracle refuses N_r={sys.n} > {DENSE_ORACLE_LIMIT}")
    a = sys.L_reduced.toarray()
    lhs = a.T @ a + beta * np.eye(sys.n)
    rhs = a.T @ sys.b_reduced + beta * sys.F_reduced
    return np.linalg.solve(lhs, rhs)


def beta_scores(
    blocks: Sequence,
    grid: Sequence[float],
    cfg: SolverConfig,
    M: int = 21,
    parallelism: int = 1,
    boundary_mode: str = "quadratic",
) -> dict[float, float]:
    """Median forecast error over ``blocks`` for every candidate beta."""
    from .pipeline import run_batch

    if not blocks:
        raise ValueError("beta search needs at least one data block")
    if not grid:
        raise ValueError("beta search needs at least one candidate")
    missing = [b.option_id for b in blocks if not b.has_truth]
    if missing:
        raise ValueError(f"blocks without ground truth: {missing[:5]}")
    scores = {}
    for beta in grid:
        report = run_batch(blocks, replace(cfg, beta=float(beta)), M, parallelism, boundary_mode=boundary_mode)
        median = report.median_err
        scores[float(beta)] = float("inf") if median is None else median
        logger.info("beta=%g median err=%s failures=%d", beta, median, len(report.failures))
    return scores


def beta_search(
    blocks: Sequence,
    grid: Sequence[float],
    cfg: SolverConfig,
    M: int = 21,
    parallelism: int = 1,
    boundary_mode: str = "quadratic",
) -> float:
    """Candidate beta with the smallest median error; ties go to the larger beta."""
    scores = beta_scores(blocks, grid, cfg, M, parallelism, boundary_mode)
    return min(scores, key=lambda b: (scores[b], -b))
