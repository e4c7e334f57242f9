"""Weighted graph total-variation denoising over the q x q grid.

The grid problem is split three ways (loss, row chains, column chains) and
solved by consensus ADMM; the chain blocks are exact 1D fused-lasso
problems handled by a linear-time dynamic program.
"""
from typing import Optional, Tuple
import logging
import math

import numpy as np
from scipy.special import expit, logit

from .data_and_types import (
    CellAggregates, GridGraph, LossKind, SolverSettings, TvProblem, TvSolution,
)
from .exceptions import InvalidArgumentError, SolverError

logger = logging.getLogger(__name__)

NUMBA_AVAILABLE = True
try:
    import numba as nb
except ImportError:
    NUMBA_AVAILABLE = False

LOGIT_CLIP = 10.0
_NEWTON_MAX_ITERS = 50
_RHO_UPDATE_EVERY = 10
_RESIDUAL_RATIO = 10.0


# ------------------------------
# 1D weighted fused lasso
# ------------------------------

def _tv1d_kernel(a, w, lam, out):
    """Exact minimizer of 0.5 * sum w_i (a_i - b_i)^2 + lam * sum |b_i - b_{i+1}|, lam > 0.

    Forward pass keeps the derivative of the partial objective as a
    piecewise-linear function stored as knots (position, slope increment,
    intercept increment) in a double-ended buffer; clipping it to
    [-lam, lam] yields the back-pointer interval of every position.
    """
    n = a.shape[0]
    if n == 1:
        out[0] = a[0]
        return
    size = 2 * n + 2
    kx = np.empty(size)
    ka = np.empty(size)
    kb = np.empty(size)
    lower = np.empty(n - 1)
    upper = np.empty(n - 1)
    lo = n + 1
    hi = n
    left_a = w[0]
    left_b = -w[0] * a[0]
    right_a = left_a
    right_b = left_b

    for k in range(n - 1):
        ca = left_a
        cb = left_b
        last = -np.inf
        while lo <= hi and ca * kx[lo] + cb < -lam:
            ca += ka[lo]
            cb += kb[lo]
            last = kx[lo]
            lo += 1
        if ca > 0.0:
            t_lo = max((-lam - cb) / ca, last)
            if lo <= hi:
                t_lo = min(t_lo, kx[lo])
        else:
            t_lo = last

        da = right_a
        db = right_b
        last = np.inf
        while lo <= hi and da * kx[hi] + db > lam:
            da -= ka[hi]
            db -= kb[hi]
            last = kx[hi]
            hi -= 1
        if da > 0.0:
            t_hi = min((lam - db) / da, last)
            if lo <= hi:
                t_hi = max(t_hi, kx[hi])
        else:
            t_hi = last
        if t_lo > t_hi:
            t_lo = t_hi

        lower[k] = t_lo
        upper[k] = t_hi
        if t_lo > -np.inf:
            lo -= 1
            kx[lo] = t_lo
            ka[lo] = ca
            kb[lo] = cb + lam
            left_a = 0.0
            left_b = -lam
        else:
            left_a = ca
            left_b = cb
        if t_hi < np.inf:
            hi += 1
            kx[hi] = t_hi
            ka[hi] = -da
            kb[hi] = lam - db
            right_a = 0.0
            right_b = lam
        else:
            right_a = da
            right_b = db

        left_a += w[k + 1]
        left_b -= w[k + 1] * a[k + 1]
        right_a += w[k + 1]
        right_b -= w[k + 1] * a[k + 1]

    ca = left_a
    cb = left_b
    last = -np.inf
    while lo <= hi and ca * kx[lo] + cb < 0.0:
        ca += ka[lo]
        cb += kb[lo]
        last = kx[lo]
        lo += 1
    if ca > 0.0:
        x = max(-cb / ca, last)
        if lo <= hi:
            x = min(x, kx[lo])
    elif last > -np.inf:
        x = last
    elif lo <= hi:
        x = kx[lo]
    else:
        x = 0.0
    out[n - 1] = x
    for k in range(n - 2, -1, -1):
        x = min(max(x, lower[k]), upper[k])
        out[k] = x


def _tv1d_rows(targets, weights, lam, out):
    for i in range(targets.shape[0]):
        _tv1d_kernel(targets[i], weights[i], lam, out[i])


if NUMBA_AVAILABLE:
    _tv1d_kernel = nb.njit(cache=True)(_tv1d_kernel)
    _tv1d_rows = nb.njit(cache=True)(_tv1d_rows)


def fused_lasso_1d_weighted(targets, weights, lam: float) -> np.ndarray:
    """Exact weighted 1D fused lasso.

    Zero-weight positions take the value of the adjacent fused segment.
    """
    a = np.ascontiguousarray(targets, dtype=np.float64).ravel()
    w = np.ascontiguousarray(weights, dtype=np.float64).ravel()
    if a.shape != w.shape:
        raise InvalidArgumentError("targets and weights must have equal lengths")
    if a.size == 0:
        raise InvalidArgumentError("fused lasso needs at least one position")
    if np.any(w < 0) or not np.all(np.isfinite(w)) or not np.all(np.isfinite(a)):
        raise InvalidArgumentError("weights must be finite and nonnegative, targets finite")
    if not np.any(w > 0):
        raise InvalidArgumentError("at least one weight must be positive")
    if not (lam >= 0 and math.isfinite(lam)):
        raise InvalidArgumentError(f"lambda must be finite and nonnegative, got {lam}")

    if lam == 0.0:
        return _fill_weightless(a, w > 0)
    out = np.empty_like(a)
    _tv1d_kernel(a, w, float(lam), out)
    return out


def _fill_weightless(a: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Carry the nearest observed value into unobserved positions (previous first)."""
    idx = np.where(observed, np.arange(a.size), -1)
    np.maximum.accumulate(idx, out=idx)
    first = int(np.flatnonzero(observed)[0])
    idx[idx < 0] = first
    return a[idx]


def _tv_rows(x: np.ndarray, lam: float) -> np.ndarray:
    """Unit-weight 1D TV on every row of ``x``."""
    targets = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(targets)
    _tv1d_rows(targets, np.ones_like(targets), float(lam), out)
    return out


# ------------------------------
# Objective pieces
# ------------------------------

def tv_penalty(beta, graph: GridGraph) -> float:
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size != graph.n_cells:
        raise InvalidArgumentError(
            f"beta has {beta.size} entries but the graph has {graph.n_cells} cells")
    if graph.n_edges == 0:
        return 0.0
    return float(np.abs(beta[graph.edges[:, 0]] - beta[graph.edges[:, 1]]).sum())


def cell_loss(beta, aggregates: CellAggregates, loss_kind: LossKind) -> np.ndarray:
    """Per-cell loss; empty cells contribute zero."""
    beta = np.asarray(beta, dtype=float).ravel()
    eta = aggregates.counts.astype(float)
    if loss_kind == LossKind.GAUSSIAN:
        diff = np.where(aggregates.nonempty, np.nan_to_num(aggregates.means) - beta, 0.0)
        return 0.5 * eta * diff * diff
    s = aggregates.successes.astype(float)
    return eta * np.logaddexp(0.0, beta) - s * beta


def cell_loss_grad(beta, aggregates: CellAggregates, loss_kind: LossKind) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).ravel()
    eta = aggregates.counts.astype(float)
    if loss_kind == LossKind.GAUSSIAN:
        return eta * beta - aggregates.weighted_sum
    return eta * expit(beta) - aggregates.successes.astype(float)


def objective(beta, problem: TvProblem) -> float:
    beta = np.asarray(beta, dtype=float).ravel()
    loss = float(cell_loss(beta, problem.aggregates, problem.loss_kind).sum())
    return loss + problem.lam * tv_penalty(beta, problem.graph)


def prox_loss(v, rho: float, aggregates: CellAggregates, loss_kind: LossKind) -> np.ndarray:
    """argmin_b loss_i(b) + rho/2 (b - v_i)^2 per cell."""
    if not rho > 0:
        raise InvalidArgumentError(f"rho must be positive, got {rho}")
    v = np.asarray(v, dtype=float).ravel()
    eta = aggregates.counts.astype(float)
    if loss_kind == LossKind.GAUSSIAN:
        return (aggregates.weighted_sum + rho * v) / (eta + rho)
    return _binomial_prox(v, rho, eta, aggregates.successes.astype(float))


def _binomial_prox(v, rho, eta, s) -> np.ndarray:
    """Safeguarded Newton; the root is bracketed by v + (s - eta)/rho and v + s/rho."""
    beta = v.copy()
    lo = v + (s - eta) / rho
    hi = v + s / rho
    grad_tol = 1e-12 * (1.0 + eta)
    eps = np.finfo(float).eps
    for _ in range(_NEWTON_MAX_ITERS + 1):
        p = expit(beta)
        grad = eta * p - s + rho * (beta - v)
        done = (np.abs(grad) <= grad_tol) | (hi - lo <= 8.0 * eps * (1.0 + np.abs(beta)))
        if np.all(done):
            return beta
        lo = np.where(grad < 0, beta, lo)
        hi = np.where(grad > 0, beta, hi)
        step = beta - grad / (eta * p * (1.0 - p) + rho)
        step = np.where((step <= lo) | (step >= hi), 0.5 * (lo + hi), step)
        beta = np.where(done, beta, step)
    raise SolverError("Binomial proximal Newton iteration did not converge")


def initial_beta(aggregates: CellAggregates, loss_kind: LossKind) -> np.ndarray:
    """Global weighted mean (Gaussian) or clipped logit of the pooled rate (binomial)."""
    p = aggregates.pooled_mean
    if loss_kind == LossKind.GAUSSIAN:
        value = p
    else:
        value = _clipped_logit(p)
    return np.full(aggregates.n_cells, float(value))


def _clipped_logit(p):
    with np.errstate(divide='ignore'):
        return np.clip(logit(np.clip(p, 0.0, 1.0)), -LOGIT_CLIP, LOGIT_CLIP)


def unpenalized_solution(aggregates: CellAggregates, loss_kind: LossKind,
                         fill: np.ndarray) -> np.ndarray:
    """Cell-wise minimizers on nonempty cells, ``fill`` elsewhere."""
    if loss_kind == LossKind.GAUSSIAN:
        own = np.nan_to_num(aggregates.means)
    else:
        own = _clipped_logit(np.nan_to_num(aggregates.means))
    return np.where(aggregates.nonempty, own, fill)


def mean_response(beta, loss_kind: LossKind) -> np.ndarray:
    """Fitted response scale: identity (Gaussian) or probabilities (binomial)."""
    beta = np.asarray(beta, dtype=float)
    return expit(beta) if loss_kind == LossKind.BINOMIAL else beta


def balance_rho(rho: float, primal: float, dual: float,
                settings: SolverSettings) -> Tuple[float, float]:
    """Residual balancing; returns (new rho, multiplicative factor applied)."""
    rho_min, rho_max = settings.rho_bounds
    if primal > _RESIDUAL_RATIO * dual and rho * 2.0 <= rho_max:
        return rho * 2.0, 2.0
    if dual > _RESIDUAL_RATIO * primal and rho / 2.0 >= rho_min:
        return rho / 2.0, 0.5
    return rho, 1.0


def _start_point(aggregates: CellAggregates, loss_kind: LossKind, init) -> np.ndarray:
    if init is None:
        return initial_beta(aggregates, loss_kind)
    start = np.array(init, dtype=float).ravel()
    if start.size != aggregates.n_cells or not np.all(np.isfinite(start)):
        raise InvalidArgumentError("warm start must be finite with one value per cell")
    return start


# ------------------------------
# Grid solver
# ------------------------------

def solve_tv_grid(problem: TvProblem, settings: Optional[SolverSettings] = None,
                  init=None) -> TvSolution:
    settings = settings or SolverSettings()
    agg = problem.aggregates
    loss = problem.loss_kind
    q = agg.q
    start = _start_point(agg, loss, init)

    if problem.lam == 0.0:
        beta = unpenalized_solution(agg, loss, initial_beta(agg, loss))
        value = objective(beta, problem)
        return TvSolution(beta=beta, iterations=0, converged=True, objective=value,
                          history=[value], rho=settings.admm_rho)

    lam = problem.lam
    rho = settings.admm_rho
    z_rows = start.reshape(q, q).copy()
    z_cols = z_rows.copy()
    u_rows = np.zeros((q, q))
    u_cols = np.zeros((q, q))
    best_beta = start
    best_obj = objective(start, problem)
    history = [best_obj]
    converged = False
    iteration = 0

    for iteration in range(1, settings.max_iters + 1):
        v = 0.5 * ((z_rows - u_rows) + (z_cols - u_cols))
        beta = prox_loss(v, 2.0 * rho, agg, loss).reshape(q, q)

        prev_rows, prev_cols = z_rows, z_cols
        z_rows = _tv_rows(beta + u_rows, lam / rho)
        z_cols = _tv_rows((beta + u_cols).T, lam / rho).T
        r_rows = beta - z_rows
        r_cols = beta - z_cols
        u_rows += r_rows
        u_cols += r_cols

        primal = math.sqrt(float(np.sum(r_rows ** 2) + np.sum(r_cols ** 2)))
        dual = rho * math.sqrt(float(np.sum((z_rows - prev_rows) ** 2)
                                     + np.sum((z_cols - prev_cols) ** 2)))

        value = objective(beta, problem)
        if value < best_obj:
            best_obj = value
            best_beta = beta.ravel().copy()
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
        logger.warning("TV solver reached max_iters=%d at lambda=%.6g without converging",
                       settings.max_iters, lam)
    return TvSolution(beta=best_beta, iterations=iteration, converged=converged,
                      objective=best_obj, history=history, rho=rho)
