from typing import List, Optional, Tuple
from pathlib import Path
import logging

from gaptv.exceptions import GapTVError
from gaptv.model_io import load_model
from gaptv.pipeline import predict

from ..error_mapping.error_mappers import CliError, GapTVErrorMapper
from ..utils.file_preprocessing import ingest_points, write_predictions

logger = logging.getLogger(__name__)


class PredictExecutor:
    """Applies a saved model to a CSV of points"""

    def __init__(self, model_path: str, points_path: str, out_path: str,
                 columns: Tuple[str, str] = ('x1', 'x2')):
        self.model_path = Path(model_path)
        self.points_path = Path(points_path)
        self.out_path = Path(out_path)
        self.columns = columns
        self.n_points: Optional[int] = None

    def execute_predict(self) -> Tuple[List[str], List[CliError]]:
        changes = []
        errors = []
        try:
            model = load_model(self.model_path)
        except (GapTVError, OSError) as e:
            errors.append(GapTVErrorMapper(str(self.model_path)).map_error(e))
            return changes, errors
        try:
            points = ingest_points(self.points_path, *self.columns)
            yhat = predict(model, points)
            write_predictions(self.out_path, points, yhat)
        except (GapTVError, OSError) as e:
            errors.append(GapTVErrorMapper(str(self.points_path)).map_error(e))
            return changes, errors
        self.n_points = int(points.shape[0])
        changes.append(f"Wrote {self.n_points} predictions: {self.out_path}")
        return changes, errors
