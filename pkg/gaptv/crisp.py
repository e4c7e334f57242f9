"""CRISP baseline: group-fused-lasso on whole row and column differences.

Solved on the per-cell weighted least-squares form with an edge-split ADMM
(network-lasso style); the quadratic step reuses a sparse factorization of
diag(eta) + rho * L for every rho value visited.
"""
from typing import Callable, Dict, Optional
import logging
import math

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import factorized

from .data_and_types import CrispProblem, LossKind, SolverSettings, TvSolution
from .exceptions import InvalidArgumentError
from .grid import grid_edges
from .tv_solver import (
    _RHO_UPDATE_EVERY, _start_point, balance_rho, initial_beta, unpenalized_solution,
)

logger = logging.getLogger(__name__)


def crisp_penalty(M) -> float:
    """Sum of l2 norms of consecutive row differences and consecutive column differences."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgumentError(f"CRISP penalty needs a square matrix, got shape {M.shape}")
    return float(np.linalg.norm(_row_diff(M), axis=1).sum()
                 + np.linalg.norm(_col_diff(M), axis=0).sum())


def group_soft_threshold(v, t: float) -> np.ndarray:
    """Proximal operator of t * ||v||_2."""
    if t < 0:
        raise InvalidArgumentError(f"threshold must be nonnegative, got {t}")
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm <= t:
        return np.zeros_like(v)
    return (1.0 - t / norm) * v


def _shrink_groups(x: np.ndarray, t: float, axis: int) -> np.ndarray:
    norms = np.linalg.norm(x, axis=axis, keepdims=True)
    scale = np.maximum(0.0, 1.0 - t / np.maximum(norms, np.finfo(float).tiny))
    return scale * x


def _row_diff(M):
    return M[1:, :] - M[:-1, :]


def _col_diff(M):
    return M[:, 1:] - M[:, :-1]


def _row_diff_adjoint(Z, q):
    out = np.zeros((q, q))
    out[1:, :] += Z
    out[:-1, :] -= Z
    return out


def _col_diff_adjoint(Z, q):
    out = np.zeros((q, q))
    out[:, 1:] += Z
    out[:, :-1] -= Z
    return out


def grid_laplacian(q: int) -> sparse.csc_matrix:
    graph = grid_edges(q)
    m = graph.n_edges
    rows = np.repeat(np.arange(m), 2)
    cols = graph.edges.ravel()
    data = np.tile([-1.0, 1.0], m)
    incidence = sparse.csr_matrix((data, (rows, cols)), shape=(m, q * q))
    return (incidence.T @ incidence).tocsc()


def crisp_objective(beta, problem: CrispProblem) -> float:
    beta = np.asarray(beta, dtype=float).ravel()
    agg = problem.aggregates
    diff = np.where(agg.nonempty, np.nan_to_num(agg.means) - beta, 0.0)
    loss = 0.5 * float(np.sum(agg.counts * diff * diff))
    return loss + problem.lam * crisp_penalty(beta.reshape(problem.q, problem.q))


def solve_crisp(problem: CrispProblem, settings: Optional[SolverSettings] = None,
                init=None) -> TvSolution:
    settings = settings or SolverSettings()
    agg = problem.aggregates
    q = problem.q
    start = _start_point(agg, LossKind.GAUSSIAN, init)

    if problem.lam == 0.0:
        beta = unpenalized_solution(agg, LossKind.GAUSSIAN,
                                    initial_beta(agg, LossKind.GAUSSIAN))
        value = crisp_objective(beta, problem)
        return TvSolution(beta=beta, iterations=0, converged=True, objective=value,
                          history=[value], rho=settings.admm_rho)

    lam = problem.lam
    eta = agg.counts.astype(float)
    laplacian = grid_laplacian(q)
    solvers: Dict[float, Callable] = {}

    def quadratic_solver(rho: float) -> Callable:
        if rho not in solvers:
            system = (sparse.diags(eta) + rho * laplacian).tocsc()
            solvers[rho] = factorized(system)
        return solvers[rho]

    rho = settings.admm_rho
    M = start.reshape(q, q)
    z_rows = _row_diff(M)
    z_cols = _col_diff(M)
    u_rows = np.zeros_like(z_rows)
    u_cols = np.zeros_like(z_cols)
    best_beta = start
    best_obj = crisp_objective(start, problem)
    history = [best_obj]
    converged = False
    iteration = 0

    for iteration in range(1, settings.max_iters + 1):
        rhs = agg.weighted_sum + rho * (_row_diff_adjoint(z_rows - u_rows, q)
                                        + _col_diff_adjoint(z_cols - u_cols, q)).ravel()
        beta = quadratic_solver(rho)(rhs)
        M = beta.reshape(q, q)
        d_rows = _row_diff(M)
        d_cols = _col_diff(M)

        prev_rows, prev_cols = z_rows, z_cols
        z_rows = _shrink_groups(d_rows + u_rows, lam / rho, axis=1)
        z_cols = _shrink_groups(d_cols + u_cols, lam / rho, axis=0)
        r_rows = d_rows - z_rows
        r_cols = d_cols - z_cols
        u_rows += r_rows
        u_cols += r_cols

        primal = math.sqrt(float(np.sum(r_rows ** 2) + np.sum(r_cols ** 2)))
        dual = rho * float(np.linalg.norm(_row_diff_adjoint(z_rows - prev_rows, q)
                                          + _col_diff_adjoint(z_cols - prev_cols, q)))

        value = crisp_objective(beta, problem)
        if value < best_obj:
            best_obj = value
            best_beta = beta.copy()
        history.append(best_obj)

        threshold = settings.tol * (1.0 + float(np.linalg.norm(beta)))
        if primal <= threshold and dual <= threshold:
            converged = True
            break
        if iteration % _RHO_UPDATE_EVERY == 0:
            rho, factor = balance_rho(rho, primal, dual, settings)
            if factor != 1.0:
                u_rows /= factor
                u_cols /= factor

    if not converged and settings.warn_unconverged:
        logger.warning("CRISP solver reached max_iters=%d at lambda=%.6g without converging",
                       settings.max_iters, lam)
    return TvSolution(beta=best_beta, iterations=iteration, converged=converged,
                      objective=best_obj, history=history, rho=rho)
