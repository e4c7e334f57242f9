"""Method comparison on plateau worlds and the fixed-q trade-off scan."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, List, Optional, Sequence, Tuple
import logging
import math
import time

import numpy as np
import pandas as pd

from gaptv.data_and_types import (
    FitConfig, FitMethod, GapScan, Model,
)
from gaptv.exceptions import GapTVError, InvalidArgumentError
from gaptv.gap import select_q
from gaptv.pipeline import fit, predict

from .plateau_world import PlateauWorld, gen_plateau_world, sample_observations

logger = logging.getLogger(__name__)

DEFAULT_N_VALUES = (100, 500, 2000)
DEFAULT_TRIALS = 20
SWEEP_N_VALUES = (50, 100, 200, 500, 1000, 2000, 5000, 10000)
SWEEP_TRIALS = 100
HELDOUT_DRAWS = 1000
QSCAN_RANGE = (2, 50)

# stable per-method stream identifiers; never derived from list position
_METHOD_CODES = {
    FitMethod.GAPTV: 0,
    FitMethod.GAPCRISP: 1,
    FitMethod.CRISP_FIXED_Q: 2,
    FitMethod.CONSTANT: 3,
}

REPORT_COLUMNS = ('method', 'n', 'trial', 'q', 'lambda', 'rmse', 'max_err',
                  'plateaus', 'aic', 'seconds')


@dataclass(frozen=True)
class BenchmarkRow:
    method: str
    n: int
    trial: int
    q: int
    lam: float
    rmse: float
    max_err: float
    plateaus: int
    aic: float
    seconds: float
    heldout_rmse: float = math.nan
    converged: bool = True
    error: Optional[str] = None


@dataclass(frozen=True)
class BenchmarkReport:
    rows: Tuple[BenchmarkRow, ...] = ()

    def __len__(self) -> int:
        return len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        records = []
        for r in self.rows:
            records.append({
                'method': r.method, 'n': r.n, 'trial': r.trial, 'q': r.q,
                'lambda': r.lam, 'rmse': r.rmse, 'max_err': r.max_err,
                'plateaus': r.plateaus, 'aic': r.aic, 'seconds': r.seconds,
                'heldout_rmse': r.heldout_rmse, 'converged': r.converged,
                'error': r.error,
            })
        return pd.DataFrame.from_records(
            records, columns=list(REPORT_COLUMNS) + ['heldout_rmse', 'converged', 'error'])

    def summary(self) -> pd.DataFrame:
        """Median metrics per (method, n)."""
        frame = self.to_frame()
        if frame.empty:
            return frame
        return (frame.groupby(['method', 'n'], sort=True)[['rmse', 'max_err', 'plateaus', 'aic']]
                .median().reset_index())


@dataclass(frozen=True)
class _Task:
    trial: int
    n: int
    method: FitMethod
    world_seed: int
    sample_seed: int
    fit_seed: int
    heldout_seed: int
    config: FitConfig
    deterministic: bool


def derive_seed(seed: int, *keys: int) -> int:
    """Independent integer seed for the stream identified by ``keys``."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def truth_errors(model: Model, world: PlateauWorld) -> Tuple[float, float]:
    """RMSE and max absolute error of the model against the truth at every cell centre."""
    pred = predict(model, world.cell_centers())
    diff = pred - world.truth.ravel()
    return float(np.sqrt(np.mean(diff * diff))), float(np.max(np.abs(diff)))


def heldout_rmse(model: Model, world: PlateauWorld, seed: int,
                 draws: int = HELDOUT_DRAWS, noise_sd: float = 1.0) -> float:
    fresh = sample_observations(world, draws, noise_sd=noise_sd, seed=seed)
    pred = predict(model, np.column_stack([fresh.x1, fresh.x2]))
    return float(np.sqrt(np.mean((pred - fresh.y) ** 2)))


def _failed_row(task: _Task, error: GapTVError) -> BenchmarkRow:
    logger.warning("%s failed at n=%d trial=%d: %s", task.method.value, task.n, task.trial, error)
    return BenchmarkRow(method=task.method.value, n=task.n, trial=task.trial, q=0,
                        lam=math.nan, rmse=math.nan, max_err=math.nan, plateaus=0,
                        aic=math.nan, seconds=0.0, converged=False, error=str(error))


def _run_task(task: _Task) -> BenchmarkRow:
    try:
        world = gen_plateau_world(task.world_seed)
        data = sample_observations(world, task.n, seed=task.sample_seed)
    except GapTVError as e:
        return _failed_row(task, e)
    config = replace(task.config, method=task.method, seed=task.fit_seed)
    start = time.perf_counter()
    try:
        model = fit(data, config)
    except GapTVError as e:
        return _failed_row(task, e)
    seconds = 0.0 if task.deterministic else time.perf_counter() - start
    rmse, max_err = truth_errors(model, world)
    return BenchmarkRow(method=task.method.value, n=task.n, trial=task.trial, q=model.q,
                        lam=model.lam, rmse=rmse, max_err=max_err,
                        plateaus=model.plateau_count, aic=model.aic, seconds=seconds,
                        heldout_rmse=heldout_rmse(model, world, task.heldout_seed),
                        converged=model.converged)


def benchmark_tasks(methods: Sequence[FitMethod], n_values: Sequence[int], trials: int,
                    seed: int, config: Optional[FitConfig] = None,
                    deterministic: bool = False) -> List[_Task]:
    """One task per (trial, n, method). The world depends on the trial and the
    sample on (trial, n), so methods are compared on the same data."""
    if trials < 1:
        raise InvalidArgumentError(f"trials must be >= 1, got {trials}")
    if not methods:
        raise InvalidArgumentError("At least one method is required")
    config = config or FitConfig()
    tasks = []
    for trial in range(trials):
        world_seed = derive_seed(seed, trial)
        for n in n_values:
            if n < 1:
                raise InvalidArgumentError(f"sample sizes must be positive, got {n}")
            for method in methods:
                code = _METHOD_CODES[method]
                tasks.append(_Task(
                    trial=trial, n=int(n), method=method, world_seed=world_seed,
                    sample_seed=derive_seed(seed, trial, int(n)),
                    fit_seed=derive_seed(seed, trial, int(n), code) % (2 ** 31),
                    heldout_seed=derive_seed(seed, trial, int(n), code, 1),
                    config=config, deterministic=deterministic))
    return tasks


def run_benchmark(methods: Sequence[FitMethod], n_values: Sequence[int] = DEFAULT_N_VALUES,
                  trials: int = DEFAULT_TRIALS, seed: int = 0,
                  config: Optional[FitConfig] = None, jobs: int = 1,
                  deterministic: bool = False,
                  on_row: Optional[Callable[[BenchmarkRow], None]] = None) -> BenchmarkReport:
    tasks = benchmark_tasks(methods, n_values, trials, seed, config, deterministic)
    logger.info("Running %d benchmark fits with %d worker(s)", len(tasks), jobs)
    rows = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for row in pool.map(_run_task, tasks):
                rows.append(row)
                if on_row:
                    on_row(row)
    else:
        for task in tasks:
            row = _run_task(task)
            rows.append(row)
            if on_row:
                on_row(row)
    return BenchmarkReport(tuple(rows))


# ------------------------------
# q scan
# ------------------------------

@dataclass(frozen=True)
class QScanRow:
    q: int
    rmse: float
    max_error: float
    selected: bool


@dataclass(frozen=True)
class QScanResult:
    rows: Tuple[QScanRow, ...]
    selected_q: int
    gap_scan: GapScan = field(default_factory=GapScan)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame.from_records(
            [{'q': r.q, 'rmse': r.rmse, 'max_error': r.max_error, 'selected': r.selected}
             for r in self.rows],
            columns=['q', 'rmse', 'max_error', 'selected'])


def q_scan_study(world: PlateauWorld, n: int, q_range: Iterable[int] = range(2, 51),
                 seed: int = 0, config: Optional[FitConfig] = None) -> QScanResult:
    """Fit GapTV at every fixed q and mark the q the gap statistic would choose."""
    qs = sorted({int(q) for q in q_range})
    if not qs or qs[0] < QSCAN_RANGE[0] or qs[-1] > QSCAN_RANGE[1]:
        raise InvalidArgumentError(f"q range must be a nonempty subset of {list(QSCAN_RANGE)}")
    config = config or FitConfig()
    data = sample_observations(world, n, seed=seed)
    gap_config = replace(config.gap, q_min=qs[0], q_max=qs[-1])
    selected, scan = select_q(data, gap_config)

    rows = []
    for q in qs:
        model = fit(data, replace(config, method=FitMethod.GAPTV, fixed_q=q, gap=gap_config))
        rmse, max_err = truth_errors(model, world)
        rows.append(QScanRow(q=q, rmse=rmse, max_error=max_err, selected=(q == selected)))
        logger.debug("q-scan q=%d rmse=%.4f max_err=%.4f", q, rmse, max_err)
    return QScanResult(rows=tuple(rows), selected_q=selected, gap_scan=scan)
