from typing import List, Optional, Sequence, Tuple
from pathlib import Path
import logging

from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from bench.benchmark import (
    BenchmarkReport, QScanResult, derive_seed, q_scan_study, run_benchmark,
)
from bench.plateau_world import gen_plateau_world
from bench.report import export_truth, write_qscan_csv, write_report_csv, write_report_jsonl
from gaptv.data_and_types import FitConfig, FitMethod
from gaptv.exceptions import GapTVError

from ..error_mapping.error_mappers import CliError, GapTVErrorMapper

logger = logging.getLogger(__name__)


def summary_table(report: BenchmarkReport) -> Table:
    table = Table(show_header=True, title="Median metrics")
    for column in ("Method", "n", "RMSE", "Max error", "Plateaus", "AIC"):
        table.add_column(column, justify="left" if column == "Method" else "right")
    frame = report.summary()
    for row in frame.itertuples(index=False):
        table.add_row(row.method, str(row.n), f"{row.rmse:.4f}", f"{row.max_err:.4f}",
                      f"{row.plateaus:g}", f"{row.aic:.2f}")
    return table


class BenchmarkExecutor:
    """Runs the plateau-world comparison and writes CSV and JSON-lines reports"""

    def __init__(self, out_dir: str, methods: Sequence[FitMethod], n_values: Sequence[int],
                 trials: int, seed: int, config: FitConfig, jobs: int = 1,
                 deterministic: bool = False, export: bool = False,
                 console: Optional[Console] = None):
        self.out_dir = Path(out_dir)
        self.methods = list(methods)
        self.n_values = list(n_values)
        self.trials = trials
        self.seed = seed
        self.config = config
        self.jobs = jobs
        self.deterministic = deterministic
        self.export = export
        self.console = console or Console()
        self.mapper = GapTVErrorMapper()
        self.report: Optional[BenchmarkReport] = None

    def execute_benchmark(self) -> Tuple[List[str], List[CliError]]:
        changes = []
        errors = []
        total = self.trials * len(self.n_values) * len(self.methods)
        try:
            with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"),
                          BarColumn(), TextColumn("{task.completed}/{task.total}"),
                          console=self.console, transient=True) as progress:
                task = progress.add_task("Benchmark fits", total=total)
                self.report = run_benchmark(
                    self.methods, self.n_values, self.trials, self.seed, self.config,
                    jobs=self.jobs, deterministic=self.deterministic,
                    on_row=lambda row: progress.advance(task))
            changes.append(f"Wrote report: {write_report_csv(self.report, self.out_dir / 'report.csv')}")
            changes.append(f"Wrote report: {write_report_jsonl(self.report, self.out_dir / 'report.jsonl')}")
            if self.export:
                world = gen_plateau_world(derive_seed(self.seed, 0))
                for path in export_truth(world, self.out_dir / 'truth_trial0').values():
                    changes.append(f"Wrote truth grid: {path}")
        except (GapTVError, OSError) as e:
            errors.append(self.mapper.map_error(e))
            return changes, errors

        self.console.print(summary_table(self.report))
        failed = [r for r in self.report.rows if r.error]
        if failed:
            logger.warning("%d of %d fits failed", len(failed), len(self.report))
        if any(not r.converged for r in self.report.rows if not r.error):
            errors.append(self.mapper.non_convergence("At least one benchmark fit"))
        return changes, errors


class QScanExecutor:
    """Fits GapTV at every fixed q on one generated world"""

    def __init__(self, out_path: str, n: int, q_min: int, q_max: int, seed: int,
                 config: FitConfig, world_seed: Optional[int] = None,
                 console: Optional[Console] = None):
        self.out_path = Path(out_path)
        self.n = n
        self.q_range = range(q_min, q_max + 1)
        self.seed = seed
        self.world_seed = derive_seed(seed, 0) if world_seed is None else world_seed
        self.config = config
        self.console = console or Console()
        self.result: Optional[QScanResult] = None

    def execute_qscan(self) -> Tuple[List[str], List[CliError]]:
        changes = []
        errors = []
        try:
            world = gen_plateau_world(self.world_seed)
            with self.console.status(f"Scanning q in [{self.q_range.start}, {self.q_range.stop - 1}]"):
                self.result = q_scan_study(world, self.n, self.q_range, self.seed, self.config)
            write_qscan_csv(self.result, self.out_path)
        except (GapTVError, OSError) as e:
            errors.append(GapTVErrorMapper().map_error(e))
            return changes, errors

        table = Table(show_header=True, title=f"q scan (n = {self.n})")
        for column in ("q", "RMSE", "Max error"):
            table.add_column(column, justify="right")
        for row in self.result.rows:
            table.add_row(str(row.q), f"{row.rmse:.4f}", f"{row.max_error:.4f}",
                          style="bold green" if row.selected else None)
        self.console.print(table)
        changes.append(f"Gap statistic selected q = {self.result.selected_q}")
        changes.append(f"Wrote q scan: {self.out_path}")
        return changes, errors
