from typing import List, Optional, Tuple
from pathlib import Path
import logging

import numpy as np
from rich.console import Console

from gaptv.data_and_types import FitConfig, LossKind, Model
from gaptv.exceptions import GapTVError
from gaptv.model_io import save_model
from gaptv.pipeline import fit, predict

from ..error_mapping.error_mappers import CliError, GapTVErrorMapper
from ..utils.file_preprocessing import ingest_csv

logger = logging.getLogger(__name__)


def summary_line(model: Model, rmse: float) -> str:
    return (f"method={model.method.value} q={model.q} lambda={model.lam:.6g} "
            f"plateaus={model.plateau_count} aic={model.aic:.6g} rmse={rmse:.6g}")


class FitExecutor:
    """Reads a CSV, fits a model and writes it as JSON"""

    def __init__(self, data_path: str, out_path: str, config: FitConfig,
                 loss_kind: LossKind = LossKind.GAUSSIAN,
                 columns: Tuple[str, str, str] = ('x1', 'x2', 'y'),
                 console: Optional[Console] = None):
        self.data_path = Path(data_path)
        self.out_path = Path(out_path)
        self.config = config
        self.loss_kind = loss_kind
        self.columns = columns
        self.console = console or Console(stderr=True)
        self.mapper = GapTVErrorMapper(str(self.data_path))
        self.model: Optional[Model] = None
        self.summary: Optional[str] = None

    def execute_fit(self) -> Tuple[List[str], List[CliError]]:
        changes = []
        errors = []
        try:
            data = ingest_csv(self.data_path, self.loss_kind, *self.columns)
            with self.console.status(f"Fitting {self.config.method.value} on {data.n} points"):
                model = fit(data, self.config)
            save_model(model, self.out_path)
        except (GapTVError, OSError) as e:
            logger.debug("fit failed", exc_info=True)
            errors.append(self.mapper.map_error(e))
            return changes, errors

        fitted = predict(model, np.column_stack([data.x1, data.x2]))
        rmse = float(np.sqrt(np.mean((fitted - data.y) ** 2)))
        self.model = model
        self.summary = summary_line(model, rmse)
        changes.append(f"Wrote model: {self.out_path}")
        if not model.converged:
            errors.append(self.mapper.non_convergence("The final solve"))
        return changes, errors
