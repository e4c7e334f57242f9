"""Gap statistic over quantile grids, used to choose the grid size q.

Each candidate q partitions the responses into q * q cells; the within-cell
dispersion is compared with the expected log dispersion of an i.i.d. null
(Gaussian: scaled chi-square; binary labels: binomial pair disagreements).
"""
from typing import Tuple
import logging
import math

import numpy as np

from .data_and_types import (
    Dataset, GapConfig, GapMode, GapScan, GapScanEntry, LossKind,
)
from .exceptions import (
    DegenerateDistributionError, DomainError, InvalidArgumentError, SelectionError,
)
from .grid import assign_cells, build_grid

logger = logging.getLogger(__name__)

_LOG2 = math.log(2.0)

# Bernoulli-number coefficients of the asymptotic digamma series
_PSI_SERIES = (1.0 / 12, 1.0 / 120, 1.0 / 252, 1.0 / 240, 1.0 / 132, 691.0 / 32760, 1.0 / 12)


def digamma(x: float) -> float:
    """psi(x) for x > 0 via upward recurrence to x >= 10 and the asymptotic series."""
    x = float(x)
    if not (x > 0 and math.isfinite(x)):
        raise DomainError(f"digamma is only defined here for finite x > 0, got {x}")
    shift = 0.0
    while x < 10.0:
        shift -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    for coef in reversed(_PSI_SERIES):
        series = coef - inv2 * series
    series *= inv2
    return shift + math.log(x) - 0.5 / x - series


def gaussian_null_log_expect(nu: float) -> float:
    """E[log chi2_nu] = log 2 + psi(nu / 2)."""
    if not nu > 0:
        raise DomainError(f"Degrees of freedom must be positive, got {nu}")
    return _LOG2 + digamma(nu / 2.0)


def binomial_null_log_expect(n: int, p: float) -> float:
    """Second-order approximation of E[log W] for W ~ Bin((n^2 - n) / 2, 2p(1 - p))."""
    if n < 2:
        raise InvalidArgumentError(f"The binomial reference needs n >= 2, got {n}")
    return _binomial_log_expect_pairs((n * n - n) / 2.0, p)


def _binomial_log_expect_pairs(m: float, p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DegenerateDistributionError(
            f"Binomial reference distribution is degenerate for p = {p}")
    if not m > 0:
        raise DomainError(f"Number of pairs must be positive, got {m}")
    r = 2.0 * p * (1.0 - p)
    rm = r * m
    return math.log(rm) - (1.0 - r) / (2.0 * rm)


def pairwise_dispersion(y, assignments, method: str = "centered") -> float:
    """Sum over cells of (1 / eta_k) * sum_{i<j in k} (y_i - y_j)^2.

    ``centered`` uses the identity sum_{i<j}(y_i - y_j)^2 = eta * sum (y - ybar)^2;
    ``pairs`` enumerates the pairs of every cell explicitly.
    """
    y = np.asarray(y, dtype=float).ravel()
    cells = np.asarray(assignments, dtype=np.int64).ravel()
    if y.shape != cells.shape:
        raise InvalidArgumentError("y and assignments must have the same length")
    if y.size == 0:
        return 0.0
    if method == "centered":
        counts = np.bincount(cells)
        sums = np.bincount(cells, weights=y)
        means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        resid = y - means[cells]
        return float(np.sum(resid * resid))
    if method == "pairs":
        total = 0.0
        for cell in np.unique(cells):
            yk = y[cells == cell]
            if yk.size < 2:
                continue
            diffs = yk[:, None] - yk[None, :]
            total += 0.5 * float(np.sum(diffs * diffs)) / yk.size
        return total
    raise InvalidArgumentError(f"Unknown dispersion method '{method}'")


def _dispersion_floor(y: np.ndarray) -> float:
    """Dispersion values below this are rounding noise of an all-constant partition."""
    scale = float(np.max(np.abs(y))) if y.size else 0.0
    return y.size * (64.0 * np.finfo(float).eps * scale) ** 2


def _resolve_loss(dataset: Dataset, config: GapConfig) -> LossKind:
    if config.loss_kind is not None and config.loss_kind != dataset.loss_kind:
        raise InvalidArgumentError(
            f"Gap configuration loss '{config.loss_kind.value}' does not match "
            f"dataset loss '{dataset.loss_kind.value}'")
    return dataset.loss_kind


def _null_term(counts: np.ndarray, n: int, mode: GapMode, loss: LossKind, p_hat: float) -> float:
    if mode == GapMode.PER_CELL_NULL:
        eta = counts.astype(float)
        nu = float(np.sum(np.maximum(eta * eta / 2.0 - eta, 0.0)))
        pairs = float(np.sum((eta * eta - eta) / 2.0))
    else:
        nu = n * n / 2.0 - n
        pairs = (n * n - n) / 2.0

    if loss == LossKind.BINOMIAL:
        if pairs <= 0 or not 0.0 < p_hat < 1.0:
            return math.nan
        return _binomial_log_expect_pairs(pairs, p_hat)

    if nu <= 0:
        return math.nan
    if mode == GapMode.LITERAL:
        return digamma(nu / 2.0)
    return gaussian_null_log_expect(nu)


def gap_score(dataset: Dataset, q: int, config: GapConfig) -> GapScanEntry:
    loss = _resolve_loss(dataset, config)
    grid = build_grid(dataset, q)
    cells = assign_cells(dataset.x1, dataset.x2, grid)
    dispersion = pairwise_dispersion(dataset.y, cells)
    if dispersion <= _dispersion_floor(dataset.y):
        dispersion = 0.0
    counts = np.bincount(cells, minlength=q * q)
    null_term = _null_term(counts, dataset.n, config.mode, loss, float(np.mean(dataset.y)))

    if not math.isfinite(null_term):
        gap = math.inf
    elif config.mode == GapMode.LITERAL:
        gap = null_term - dispersion
    elif dispersion == 0.0:
        gap = math.inf
    else:
        gap = null_term - math.log(dispersion)
    logger.debug("gap q=%d dispersion=%.6g null=%.6g gap=%.6g", q, dispersion, null_term, gap)
    return GapScanEntry(q=int(q), dispersion=dispersion, null_term=null_term, gap=gap)


def select_q(dataset: Dataset, config: GapConfig) -> Tuple[int, GapScan]:
    """Return the candidate q with the smallest gap, ties toward the coarser grid."""
    _resolve_loss(dataset, config)
    q_hi = min(config.q_max, dataset.n)
    if q_hi < config.q_min:
        raise SelectionError(
            f"No candidate grid size: q range [{config.q_min}, {config.q_max}] "
            f"is empty for n = {dataset.n}", scan=GapScan(()))
    if q_hi < config.q_max:
        logger.info("Clamping q_max from %d to n = %d", config.q_max, q_hi)

    scan = GapScan(tuple(gap_score(dataset, q, config)
                         for q in range(config.q_min, q_hi + 1)))

    if np.ptp(dataset.y) == 0.0:
        logger.warning("All responses are equal; every grid has zero dispersion, "
                       "returning q_min = %d", config.q_min)
        return config.q_min, scan

    gaps = scan.gaps
    if not np.any(np.isfinite(gaps)):
        raise SelectionError(
            f"Every candidate q in [{config.q_min}, {q_hi}] has an infinite gap score", scan=scan)
    best = scan.argmin()
    logger.info("Gap statistic selected q = %d (gap %.6g)", scan.qs[best], gaps[best])
    return int(scan.qs[best]), scan
