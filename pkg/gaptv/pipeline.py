"""End-to-end fitting: choose q, choose lambda, solve, count plateaus, score AIC."""
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .crisp import solve_crisp
from .data_and_types import (
    CellAggregates, CrispProblem, Dataset, FitConfig, FitMethod, GridGraph,
    LambdaSelection, LossKind, Model, QuantileGrid, SolverSettings, TvProblem,
    TvSolution,
)
from .exceptions import InvalidArgumentError
from .gap import select_q
from .grid import aggregate_cells, assign_cells, build_grid, grid_edges
from .tv_solver import (
    _clipped_logit, initial_beta, mean_response, solve_tv_grid,
)

logger = logging.getLogger(__name__)

RSS_FLOOR = 1e-12
MAX_LAMBDA_DOUBLINGS = 10
DEFAULT_CRISP_Q = 100

_CRISP_METHODS = (FitMethod.GAPCRISP, FitMethod.CRISP_FIXED_Q)


# ------------------------------
# Plateaus and scores
# ------------------------------

def plateau_labels(beta, graph: GridGraph, rel_tol: float = 1e-4,
                   scale: Optional[float] = None) -> np.ndarray:
    """Component label of every cell after dropping edges whose ends differ by
    more than rel_tol * max(scale, 1e-12); ``scale`` defaults to range(beta)."""
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size != graph.n_cells:
        raise InvalidArgumentError(
            f"beta has {beta.size} entries but the graph has {graph.n_cells} cells")
    if not np.all(np.isfinite(beta)):
        raise InvalidArgumentError("Cannot count plateaus of a non-finite beta")
    if scale is None:
        scale = float(np.ptp(beta))
    threshold = rel_tol * max(float(scale), 1e-12)
    edges = graph.edges
    fused = np.abs(beta[edges[:, 0]] - beta[edges[:, 1]]) <= threshold
    kept = edges[fused]
    adjacency = sparse.coo_matrix(
        (np.ones(kept.shape[0]), (kept[:, 0], kept[:, 1])),
        shape=(graph.n_cells, graph.n_cells))
    _, labels = connected_components(adjacency, directed=False)
    return labels


def count_plateaus(beta, graph: GridGraph, rel_tol: float = 1e-4,
                   scale: Optional[float] = None) -> int:
    """Number of connected constant regions; see ``plateau_labels``."""
    labels = plateau_labels(beta, graph, rel_tol, scale)
    return int(labels.max()) + 1 if labels.size else 0


def plateau_scale(aggregates: CellAggregates, loss_kind: LossKind) -> float:
    """Range of the per-cell unpenalized estimates, the reference for plateau fusion."""
    filled = aggregates.nonempty
    if loss_kind == LossKind.GAUSSIAN:
        values = aggregates.means[filled]
    else:
        values = _clipped_logit(aggregates.means[filled])
    return float(np.ptp(values)) if values.size else 0.0


def heldout_loss(y, beta, loss_kind: LossKind) -> float:
    """Mean squared error (Gaussian) or mean negative log-likelihood (binomial)."""
    y = np.asarray(y, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if loss_kind == LossKind.GAUSSIAN:
        return float(np.mean((y - beta) ** 2))
    return float(np.mean(np.logaddexp(0.0, beta) - y * beta))


def _aic_value(y, beta, loss_kind: LossKind, k: int, warn: bool = True) -> float:
    y = np.asarray(y, dtype=float)
    n = y.size
    if loss_kind == LossKind.GAUSSIAN:
        mse = float(np.sum((y - beta) ** 2)) / n
        if mse < RSS_FLOOR:
            if warn:
                logger.warning("RSS/n = %.3g is below %.0e; flooring it for AIC", mse, RSS_FLOOR)
            mse = RSS_FLOOR
        return n * math.log(mse) + 2.0 * k
    nll = float(np.sum(np.logaddexp(0.0, beta) - y * beta))
    return 2.0 * nll + 2.0 * k


def aic(model: Model, dataset: Dataset) -> float:
    """AIC surrogate on the fitting data with the plateau count as degrees of freedom."""
    cells = assign_cells(dataset.x1, dataset.x2, model.grid)
    return _aic_value(dataset.y, model.beta[cells], model.loss_kind, model.plateau_count)


# ------------------------------
# Solves along a lambda path
# ------------------------------

def _solve(method: FitMethod, aggregates: CellAggregates, graph: GridGraph, lam: float,
           loss_kind: LossKind, settings: SolverSettings, init=None) -> TvSolution:
    if method in _CRISP_METHODS:
        return solve_crisp(CrispProblem(aggregates, graph.q, lam), settings, init=init)
    return solve_tv_grid(TvProblem(aggregates, graph, lam, loss_kind), settings, init=init)


def lambda_grid(aggregates: CellAggregates, graph: GridGraph, loss_kind: LossKind,
                n_lambda: int, lambda_min_ratio: float,
                settings: Optional[SolverSettings] = None,
                plateau_rel_tol: float = 1e-4, scale: Optional[float] = None,
                method: FitMethod = FitMethod.GAPTV) -> np.ndarray:
    """Descending log-spaced lambdas whose first value fully fuses the grid."""
    settings = settings or SolverSettings()
    if scale is None:
        scale = plateau_scale(aggregates, loss_kind)
    filled = aggregates.nonempty
    eta = aggregates.counts[filled].astype(float)
    # for binary labels this is |s_i - eta_i * p|, the loss gradient at the pooled logit
    lam0 = float(np.max(eta * np.abs(aggregates.means[filled] - aggregates.pooled_mean)))
    if not lam0 > 0:
        logger.warning("Cell means are all equal; the lambda grid degenerates to [0]")
        return np.array([0.0])

    lam_max = lam0
    warm = None
    for _ in range(MAX_LAMBDA_DOUBLINGS + 1):
        solution = _solve(method, aggregates, graph, lam_max, loss_kind, settings, warm)
        if count_plateaus(solution.beta, graph, plateau_rel_tol, scale) == 1:
            break
        warm = solution.beta
        lam_max *= 2.0
    else:
        lam_max /= 2.0
        logger.warning("lambda = %.6g still leaves more than one plateau after %d doublings",
                       lam_max, MAX_LAMBDA_DOUBLINGS)
    return np.geomspace(lam_max, lam_max * lambda_min_ratio, n_lambda)


def path_solutions(aggregates: CellAggregates, graph: GridGraph, lambdas: Sequence[float],
                   loss_kind: LossKind, settings: Optional[SolverSettings] = None,
                   method: FitMethod = FitMethod.GAPTV) -> List[TvSolution]:
    """Solve along ``lambdas`` in order, each solve warm-started from the previous one."""
    settings = settings or SolverSettings()
    solutions = []
    warm = None
    for lam in lambdas:
        solution = _solve(method, aggregates, graph, float(lam), loss_kind, settings, warm)
        solutions.append(solution)
        warm = solution.beta
    return solutions


def fold_indices(n: int, folds: int, seed: int) -> List[np.ndarray]:
    """Seeded shuffle split into ``folds`` nearly equal, nonempty index sets."""
    rng = np.random.default_rng(seed)
    for _ in range(2):
        parts = np.array_split(rng.permutation(n), folds)
        if all(part.size for part in parts):
            return parts
    raise InvalidArgumentError(f"Cannot split {n} observations into {folds} nonempty folds")


def cv_lambda(dataset: Dataset, q: int, config: FitConfig,
              grid: Optional[QuantileGrid] = None,
              lambdas: Optional[Sequence[float]] = None) -> Tuple[float, Tuple[Tuple[float, float], ...]]:
    """K-fold cross-validation of lambda with breaks frozen from the full data.

    Returns the lambda with the smallest mean held-out loss (the largest one on
    ties) and the (lambda, mean loss) table.
    """
    loss_kind = dataset.loss_kind
    method = config.method
    grid = grid or build_grid(dataset, q)
    graph = grid_edges(grid.q)
    cells = assign_cells(dataset.x1, dataset.x2, grid)
    if lambdas is None:
        full = aggregate_cells(dataset.y, cells, grid.q, loss_kind)
        lambdas = lambda_grid(full, graph, loss_kind, config.n_lambda, config.lambda_min_ratio,
                              settings=config.solver, plateau_rel_tol=config.plateau_rel_tol,
                              method=method)
    lambdas = np.asarray(lambdas, dtype=float)

    fold_losses = np.zeros((config.folds, lambdas.size))
    parts = fold_indices(dataset.n, config.folds, config.seed)
    settings = config.solver.along_path()
    unconverged = 0
    for f, test in enumerate(parts):
        train = np.concatenate([p for i, p in enumerate(parts) if i != f])
        train_agg = aggregate_cells(dataset.y[train], cells[train], grid.q, loss_kind)
        path = path_solutions(train_agg, graph, lambdas, loss_kind, settings, method)
        for j, solution in enumerate(path):
            fold_losses[f, j] = heldout_loss(dataset.y[test], solution.beta[cells[test]],
                                             loss_kind)
            unconverged += not solution.converged
        logger.debug("CV fold %d/%d done (%d held out)", f + 1, config.folds, test.size)
    if unconverged:
        logger.debug("%d of %d CV path solves stopped at %d iterations (path tol %.1e)",
                     unconverged, fold_losses.size, settings.max_iters, settings.tol)

    mean_losses = fold_losses.mean(axis=0)
    best = int(np.argmin(mean_losses))
    table = tuple((float(lam), float(loss)) for lam, loss in zip(lambdas, mean_losses))
    logger.info("CV selected lambda = %.6g (mean held-out loss %.6g)",
                lambdas[best], mean_losses[best])
    return float(lambdas[best]), table


# ------------------------------
# Fit and predict
# ------------------------------

def _constant_beta(aggregates: CellAggregates, loss_kind: LossKind) -> np.ndarray:
    return initial_beta(aggregates, loss_kind)


def _choose_q(dataset: Dataset, config: FitConfig):
    if config.method == FitMethod.CRISP_FIXED_Q:
        q = config.crisp_q or min(dataset.n, DEFAULT_CRISP_Q)
        return max(int(q), 2), None
    if config.fixed_q is not None:
        return int(config.fixed_q), None
    return select_q(dataset, config.gap)


def fit(dataset: Dataset, config: Optional[FitConfig] = None) -> Model:
    config = config or FitConfig()
    loss_kind = dataset.loss_kind
    method = config.method
    if method in _CRISP_METHODS and loss_kind != LossKind.GAUSSIAN:
        raise InvalidArgumentError(f"Method '{method.value}' supports the gaussian loss only")
    if method == FitMethod.CONSTANT:
        return _fit_constant(dataset, config)
    if dataset.n < config.folds:
        raise InvalidArgumentError(
            f"Need at least as many observations as folds ({dataset.n} < {config.folds})")

    q, scan = _choose_q(dataset, config)
    grid = build_grid(dataset, q)
    graph = grid_edges(q)
    cells = assign_cells(dataset.x1, dataset.x2, grid)
    agg = aggregate_cells(dataset.y, cells, q, loss_kind)
    scale = plateau_scale(agg, loss_kind)

    if np.ptp(dataset.y) == 0.0:
        logger.warning("All responses are equal; fitting a single plateau")
        beta = _constant_beta(agg, loss_kind)
        model = Model(method=method, loss_kind=loss_kind, grid=grid, beta=_frozen(beta),
                      lam=0.0, plateau_count=1, aic=math.nan, gap_scan=scan,
                      converged=True, n_obs=dataset.n)
        return replace(model, aic=aic(model, dataset))

    lambdas = lambda_grid(agg, graph, loss_kind, config.n_lambda, config.lambda_min_ratio,
                          settings=config.solver, plateau_rel_tol=config.plateau_rel_tol,
                          scale=scale, method=method)

    if config.lambda_selection == LambdaSelection.AIC:
        lam, table, solution = _select_lambda_by_aic(dataset, cells, agg, graph, lambdas,
                                                     scale, config)
    else:
        lam, table = cv_lambda(dataset, q, config, grid=grid, lambdas=lambdas)
        solution = _solve(method, agg, graph, lam, loss_kind, config.solver)

    plateaus = count_plateaus(solution.beta, graph, config.plateau_rel_tol, scale)
    model = Model(method=method, loss_kind=loss_kind, grid=grid, beta=_frozen(solution.beta),
                  lam=lam, plateau_count=plateaus, aic=math.nan, gap_scan=scan,
                  cv_table=table, converged=solution.converged, n_obs=dataset.n)
    model = replace(model, aic=aic(model, dataset))
    logger.info("Fitted %s: q=%d lambda=%.6g plateaus=%d aic=%.6g",
                method.value, q, lam, plateaus, model.aic)
    return model


def _select_lambda_by_aic(dataset, cells, agg, graph, lambdas, scale, config):
    """Pick the path solution with the smallest AIC; ties go to the larger lambda."""
    path = path_solutions(agg, graph, lambdas, dataset.loss_kind, config.solver, config.method)
    scores = []
    for solution in path:
        k = count_plateaus(solution.beta, graph, config.plateau_rel_tol, scale)
        scores.append(_aic_value(dataset.y, solution.beta[cells], dataset.loss_kind, k,
                                 warn=False))
    best = int(np.argmin(scores))
    table = tuple((float(lam), float(s)) for lam, s in zip(lambdas, scores))
    return float(lambdas[best]), table, path[best]


def _fit_constant(dataset: Dataset, config: FitConfig) -> Model:
    """Fused-constant baseline: one plateau at the pooled mean."""
    q = config.fixed_q or 2
    grid = build_grid(dataset, q)
    cells = assign_cells(dataset.x1, dataset.x2, grid)
    agg = aggregate_cells(dataset.y, cells, q, dataset.loss_kind)
    model = Model(method=FitMethod.CONSTANT, loss_kind=dataset.loss_kind, grid=grid,
                  beta=_frozen(_constant_beta(agg, dataset.loss_kind)), lam=math.inf,
                  plateau_count=1, aic=math.nan, n_obs=dataset.n)
    return replace(model, aic=aic(model, dataset))


def _frozen(beta) -> np.ndarray:
    arr = np.array(beta, dtype=float).ravel()
    arr.setflags(write=False)
    return arr


def predict(model: Model, points) -> np.ndarray:
    """Fitted value of the (clamped) cell of every (x1, x2) point; probabilities for binomial."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return np.empty(0)
    pts = pts.reshape(-1, 2)
    cells = assign_cells(pts[:, 0], pts[:, 1], model.grid)
    return mean_response(model.beta[cells], model.loss_kind)
