"""Data-adaptive quantile grid: breaks, cell lookup, per-cell statistics and edges."""
from typing import Sequence
import logging

import numpy as np

from .data_and_types import (
    CellAggregates, Dataset, GridGraph, LossKind, QuantileGrid,
)
from .exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)


def compute_breaks(values: Sequence[float], q: int) -> np.ndarray:
    """Return the q - 1 marginal break points for ``values``.

    Break j sits halfway between the k-th and (k+1)-th order statistics
    (1-based) with k = ceil(j * n / q), so each left-closed bin holds 1/q of
    the data when values are distinct.
    """
    if int(q) != q or q < 2:
        raise InvalidArgumentError(f"q must be an integer >= 2, got {q}")
    v = np.sort(np.asarray(values, dtype=float).ravel())
    n = v.size
    if n == 0:
        raise InvalidArgumentError("Cannot compute quantile breaks of an empty sequence")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("Quantile breaks require finite values")
    j = np.arange(1, int(q))
    k = -(-j * n // int(q))  # ceil(j * n / q) in integer arithmetic
    lower = v[np.minimum(k, n) - 1]
    upper = v[np.minimum(k, n - 1)]
    return 0.5 * (lower + upper)


def build_grid(dataset: Dataset, q: int) -> QuantileGrid:
    return QuantileGrid(q, compute_breaks(dataset.x1, q), compute_breaks(dataset.x2, q))


def assign_cells(x1, x2, grid: QuantileGrid) -> np.ndarray:
    """Vectorized cell lookup; points equal to a break go to the upper bin and
    points outside the training range clamp to the edge bins."""
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x1.shape != x2.shape:
        raise InvalidArgumentError("x1 and x2 must have equal lengths")
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
        raise InvalidArgumentError("Cell assignment requires finite coordinates")
    rows = np.searchsorted(grid.breaks_x1, x1, side='right')
    cols = np.searchsorted(grid.breaks_x2, x2, side='right')
    return (rows * grid.q + cols).astype(np.int64)


def assign_cell(x1: float, x2: float, grid: QuantileGrid) -> int:
    return int(assign_cells([x1], [x2], grid)[0])


def aggregate(dataset: Dataset, grid: QuantileGrid) -> CellAggregates:
    cells = assign_cells(dataset.x1, dataset.x2, grid)
    return aggregate_cells(dataset.y, cells, grid.q, dataset.loss_kind)


def aggregate_cells(y, cells, q: int, loss_kind: LossKind = LossKind.GAUSSIAN) -> CellAggregates:
    """Aggregate responses already assigned to cells (used for CV folds)."""
    y = np.asarray(y, dtype=float)
    n_cells = q * q
    counts = np.bincount(cells, minlength=n_cells).astype(np.int64)
    sums = np.bincount(cells, weights=y, minlength=n_cells)
    means = np.full(n_cells, np.nan)
    filled = counts > 0
    means[filled] = sums[filled] / counts[filled]
    successes = None
    if loss_kind == LossKind.BINOMIAL:
        successes = np.rint(sums).astype(np.int64)
    for arr in (counts, means) + ((successes,) if successes is not None else ()):
        arr.setflags(write=False)
    return CellAggregates(q=q, counts=counts, means=means,
                          loss_kind=loss_kind, successes=successes)


def grid_edges(q: int) -> GridGraph:
    """Horizontal edges first (row-major), then vertical edges."""
    if int(q) != q or q < 1:
        raise InvalidArgumentError(f"q must be a positive integer, got {q}")
    q = int(q)
    idx = np.arange(q * q).reshape(q, q)
    horizontal = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vertical = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    edges = np.vstack([horizontal, vertical]).astype(np.int64).reshape(-1, 2)
    edges.setflags(write=False)
    return GridGraph(q=q, edges=edges)
