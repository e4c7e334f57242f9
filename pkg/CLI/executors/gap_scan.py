from typing import List, Optional, Tuple
from pathlib import Path
import logging

import pandas as pd
from rich.console import Console
from rich.table import Table

from gaptv.data_and_types import GapConfig, GapScan, LossKind
from gaptv.exceptions import GapTVError
from gaptv.gap import select_q

from ..error_mapping.error_mappers import CliError, GapTVErrorMapper
from ..utils.file_preprocessing import ingest_csv, write_frame

logger = logging.getLogger(__name__)


def scan_frame(scan: GapScan) -> pd.DataFrame:
    return pd.DataFrame.from_records(
        [{'q': e.q, 'dispersion': e.dispersion, 'null_term': e.null_term, 'gap': e.gap}
         for e in scan.entries],
        columns=['q', 'dispersion', 'null_term', 'gap'])


def scan_table(scan: GapScan, selected: Optional[int]) -> Table:
    table = Table(show_header=True, title="Gap statistic scan")
    table.add_column("q", justify="right")
    table.add_column("Dispersion", justify="right")
    table.add_column("Null term", justify="right")
    table.add_column("Gap", justify="right")
    for e in scan.entries:
        style = "bold green" if e.q == selected else None
        table.add_row(str(e.q), f"{e.dispersion:.6g}", f"{e.null_term:.6g}", f"{e.gap:.6g}",
                      style=style)
    return table


class GapScanExecutor:
    """Scores every candidate q and writes the scan as CSV"""

    def __init__(self, data_path: str, out_path: Optional[str], config: GapConfig,
                 loss_kind: LossKind = LossKind.GAUSSIAN,
                 columns: Tuple[str, str, str] = ('x1', 'x2', 'y'),
                 console: Optional[Console] = None):
        self.data_path = Path(data_path)
        self.out_path = Path(out_path) if out_path else None
        self.config = config
        self.loss_kind = loss_kind
        self.columns = columns
        self.console = console or Console()
        self.selected: Optional[int] = None

    def execute_scan(self) -> Tuple[List[str], List[CliError]]:
        changes = []
        errors = []
        mapper = GapTVErrorMapper(str(self.data_path))
        scan = None
        try:
            data = ingest_csv(self.data_path, self.loss_kind, *self.columns)
            self.selected, scan = select_q(data, self.config)
        except GapTVError as e:
            errors.append(mapper.map_error(e))
            scan = getattr(e, 'scan', None)

        if scan is not None and len(scan):
            self.console.print(scan_table(scan, self.selected))
            if self.out_path is not None:
                try:
                    write_frame(self.out_path, scan_frame(scan))
                    changes.append(f"Wrote gap scan: {self.out_path}")
                except OSError as e:
                    errors.append(mapper.map_error(e))
        if self.selected is not None:
            changes.append(f"Selected q = {self.selected}")
        return changes, errors
