from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple
from enum import Enum
import math

import numpy as np

from .exceptions import InvalidArgumentError


class LossKind(Enum):
    GAUSSIAN = "gaussian"
    BINOMIAL = "binomial"


class GapMode(Enum):
    LITERAL = "literal"  # null term minus raw dispersion, no log
    LOG_DISPERSION = "log_dispersion"
    PER_CELL_NULL = "per_cell_null"


class FitMethod(Enum):
    GAPTV = "gaptv"
    GAPCRISP = "gapcrisp"
    CRISP_FIXED_Q = "crisp_fixed_q"
    CONSTANT = "constant"


class LambdaSelection(Enum):
    CV = "cv"
    AIC = "aic"


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype).ravel()
    arr.setflags(write=False)
    return arr


# ------------------------------
# Data and grid
# ------------------------------

@dataclass(frozen=True, eq=False)
class Dataset:
    """Point-referenced observations (x1, x2, y)."""
    x1: np.ndarray
    x2: np.ndarray
    y: np.ndarray
    loss_kind: LossKind = LossKind.GAUSSIAN

    def __post_init__(self):
        x1 = _frozen_array(self.x1, float)
        x2 = _frozen_array(self.x2, float)
        y = _frozen_array(self.y, float)
        if not (x1.shape == x2.shape == y.shape):
            raise InvalidArgumentError(
                f"x1, x2 and y must have equal lengths, got {x1.size}, {x2.size}, {y.size}")
        if y.size == 0:
            raise InvalidArgumentError("Dataset must contain at least one observation")
        for name, arr in (('x1', x1), ('x2', x2), ('y', y)):
            if not np.all(np.isfinite(arr)):
                bad = int(np.flatnonzero(~np.isfinite(arr))[0])
                raise InvalidArgumentError(f"Non-finite {name} value at index {bad}")
        if self.loss_kind == LossKind.BINOMIAL and not np.all((y == 0.0) | (y == 1.0)):
            bad = int(np.flatnonzero((y != 0.0) & (y != 1.0))[0])
            raise InvalidArgumentError(
                f"Binomial observations must be 0 or 1, got {y[bad]!r} at index {bad}")
        object.__setattr__(self, 'x1', x1)
        object.__setattr__(self, 'x2', x2)
        object.__setattr__(self, 'y', y)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]],
                    loss_kind: LossKind = LossKind.GAUSSIAN) -> 'Dataset':
        arr = np.asarray(points, dtype=float).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], loss_kind)

    @property
    def n(self) -> int:
        return int(self.y.size)

    def subset(self, index) -> 'Dataset':
        return Dataset(self.x1[index], self.x2[index], self.y[index], self.loss_kind)


@dataclass(frozen=True, eq=False)
class QuantileGrid:
    """q and the per-axis break points of a q x q partition.

    Rows are indexed by x1 bins, columns by x2 bins; cell = row * q + col.
    """
    q: int
    breaks_x1: np.ndarray
    breaks_x2: np.ndarray

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 2:
            raise InvalidArgumentError(f"Grid size q must be an integer >= 2, got {self.q}")
        b1 = _frozen_array(self.breaks_x1, float)
        b2 = _frozen_array(self.breaks_x2, float)
        for name, breaks in (('breaks_x1', b1), ('breaks_x2', b2)):
            if breaks.size != self.q - 1:
                raise InvalidArgumentError(
                    f"{name} must have q - 1 = {self.q - 1} entries, got {breaks.size}")
            if np.any(np.diff(breaks) < 0) or not np.all(np.isfinite(breaks)):
                raise InvalidArgumentError(f"{name} must be finite and nondecreasing")
        object.__setattr__(self, 'q', int(self.q))
        object.__setattr__(self, 'breaks_x1', b1)
        object.__setattr__(self, 'breaks_x2', b2)

    @property
    def n_cells(self) -> int:
        return self.q * self.q


@dataclass(frozen=True, eq=False)
class CellAggregates:
    """Per-cell sufficient statistics of the weighted objective.

    ``means`` is NaN on empty cells; ``successes`` is only set for binomial data.
    """
    q: int
    counts: np.ndarray
    means: np.ndarray
    loss_kind: LossKind = LossKind.GAUSSIAN
    successes: Optional[np.ndarray] = None

    @property
    def n_cells(self) -> int:
        return self.q * self.q

    @property
    def n_obs(self) -> int:
        return int(self.counts.sum())

    @property
    def nonempty(self) -> np.ndarray:
        return self.counts > 0

    @property
    def weighted_sum(self) -> np.ndarray:
        """eta_i * ybar_i, zero on empty cells."""
        return np.where(self.nonempty, self.counts * np.nan_to_num(self.means), 0.0)

    @property
    def pooled_mean(self) -> float:
        total = self.counts.sum()
        if total == 0:
            raise InvalidArgumentError("Aggregates contain no observations")
        return float(self.weighted_sum.sum() / total)


@dataclass(frozen=True, eq=False)
class GridGraph:
    """Edges joining horizontally or vertically adjacent cells of a q x q grid."""
    q: int
    edges: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.q * self.q

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])


# ------------------------------
# Gap statistic
# ------------------------------

@dataclass(frozen=True)
class GapScanEntry:
    q: int
    dispersion: float
    null_term: float
    gap: float


@dataclass(frozen=True)
class GapScan:
    entries: Tuple[GapScanEntry, ...] = ()

    @property
    def qs(self) -> np.ndarray:
        return np.array([e.q for e in self.entries], dtype=int)

    @property
    def gaps(self) -> np.ndarray:
        return np.array([e.gap for e in self.entries], dtype=float)

    def argmin(self) -> int:
        """Index of the smallest gap; the first (coarsest) one on ties."""
        return int(np.argmin(self.gaps))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class GapConfig:
    q_min: int = 2
    q_max: int = 50
    mode: GapMode = GapMode.PER_CELL_NULL
    # None follows the dataset's own loss kind
    loss_kind: Optional[LossKind] = None

    def __post_init__(self):
        if self.q_min < 2:
            raise InvalidArgumentError(f"q_min must be >= 2, got {self.q_min}")
        if self.q_max < self.q_min:
            raise InvalidArgumentError(
                f"q_max ({self.q_max}) must be >= q_min ({self.q_min})")


# ------------------------------
# Solvers
# ------------------------------

@dataclass(frozen=True)
class SolverSettings:
    """ADMM controls. ``path_tol`` and ``path_max_iters`` bound the inexact
    solves made along cross-validation paths; see ``along_path``."""
    tol: float = 1e-8
    max_iters: int = 10000
    admm_rho: float = 1.0
    rho_bounds: Tuple[float, float] = (1e-4, 1e4)
    path_tol: float = 1e-5
    path_max_iters: int = 1000
    warn_unconverged: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidArgumentError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise InvalidArgumentError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.admm_rho > 0:
            raise InvalidArgumentError(f"admm_rho must be positive, got {self.admm_rho}")
        if not self.path_tol > 0:
            raise InvalidArgumentError(f"path_tol must be positive, got {self.path_tol}")
        if self.path_max_iters < 1:
            raise InvalidArgumentError(
                f"path_max_iters must be >= 1, got {self.path_max_iters}")

    def along_path(self) -> 'SolverSettings':
        """Looser copy for warm-started path solves; never tighter than ``self``."""
        return replace(self, tol=max(self.tol, self.path_tol),
                       max_iters=min(self.max_iters, self.path_max_iters),
                       warn_unconverged=False)


@dataclass(frozen=True, eq=False)
class TvProblem:
    aggregates: CellAggregates
    graph: GridGraph
    lam: float
    loss_kind: Optional[LossKind] = None

    def __post_init__(self):
        if self.aggregates.q != self.graph.q:
            raise InvalidArgumentError(
                f"Aggregates (q={self.aggregates.q}) and graph (q={self.graph.q}) disagree")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise InvalidArgumentError(f"lambda must be finite and nonnegative, got {self.lam}")
        if self.loss_kind is None:
            object.__setattr__(self, 'loss_kind', self.aggregates.loss_kind)


@dataclass(frozen=True, eq=False)
class CrispProblem:
    aggregates: CellAggregates
    q: int
    lam: float

    def __post_init__(self):
        if self.aggregates.loss_kind != LossKind.GAUSSIAN:
            raise InvalidArgumentError("CRISP is defined for the squared-error loss only")
        if self.aggregates.q != self.q:
            raise InvalidArgumentError(
                f"Aggregates (q={self.aggregates.q}) do not match q={self.q}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise InvalidArgumentError(f"lambda must be finite and nonnegative, got {self.lam}")


@dataclass(eq=False)
class TvSolution:
    beta: np.ndarray
    iterations: int
    converged: bool
    objective: float
    history: List[float] = field(default_factory=list)
    rho: float = 1.0


# ------------------------------
# Pipeline
# ------------------------------

@dataclass(frozen=True)
class FitConfig:
    gap: GapConfig = field(default_factory=GapConfig)
    folds: int = 5
    n_lambda: int = 50
    lambda_min_ratio: float = 1e-4
    plateau_rel_tol: float = 1e-4
    solver: SolverSettings = field(default_factory=SolverSettings)
    method: FitMethod = FitMethod.GAPTV
    seed: int = 0
    lambda_selection: LambdaSelection = LambdaSelection.CV
    fixed_q: Optional[int] = None
    crisp_q: Optional[int] = None

    def __post_init__(self):
        if self.folds < 2:
            raise InvalidArgumentError(f"folds must be >= 2, got {self.folds}")
        if self.n_lambda < 2:
            raise InvalidArgumentError(f"n_lambda must be >= 2, got {self.n_lambda}")
        if not 0 < self.lambda_min_ratio < 1:
            raise InvalidArgumentError(
                f"lambda_min_ratio must lie in (0, 1), got {self.lambda_min_ratio}")
        if not self.plateau_rel_tol > 0:
            raise InvalidArgumentError("plateau_rel_tol must be positive")
        for name in ('fixed_q', 'crisp_q'):
            value = getattr(self, name)
            if value is not None and value < 2:
                raise InvalidArgumentError(f"{name} must be >= 2, got {value}")


@dataclass(frozen=True, eq=False)
class Model:
    method: FitMethod
    loss_kind: LossKind
    grid: QuantileGrid
    beta: np.ndarray
    lam: float
    plateau_count: int
    aic: float
    gap_scan: Optional[GapScan] = None
    cv_table: Tuple[Tuple[float, float], ...] = ()
    converged: bool = True
    n_obs: int = 0

    @property
    def q(self) -> int:
        return self.grid.q
