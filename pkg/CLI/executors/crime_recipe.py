from dataclasses import replace
from typing import List, Optional, Tuple
from pathlib import Path
import logging
import math

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from bench.report import write_heatmap
from gaptv.data_and_types import Dataset, FitConfig, FitMethod, LossKind
from gaptv.exceptions import DataError, GapTVError
from gaptv.grid import aggregate_cells, assign_cells, grid_edges
from gaptv.pipeline import fit, fold_indices, plateau_labels, plateau_scale, predict

from ..error_mapping.error_mappers import CliError, GapTVErrorMapper
from ..utils.file_preprocessing import ingest_points, write_frame

logger = logging.getLogger(__name__)

RECIPE_BINS = 100
MIN_RECOMMENDED_POINTS = 100
RECIPE_METHODS = (FitMethod.GAPTV, FitMethod.GAPCRISP, FitMethod.CRISP_FIXED_Q)


def _bin_index(values: np.ndarray, bins: int) -> Tuple[np.ndarray, np.ndarray]:
    """Equal-width bin of every value and the bin centres."""
    lo, hi = float(values.min()), float(values.max())
    width = (hi - lo) / bins if hi > lo else 1.0
    index = np.clip(np.floor((values - lo) / width).astype(int), 0, bins - 1)
    centres = lo + (np.arange(bins) + 0.5) * width
    return index, centres


def bin_log_counts(coordinates: np.ndarray, bins: int = RECIPE_BINS):
    """Areal dataset of log event counts per lat/lon bin; empty bins are omitted.

    Returns the dataset, the full (bins x bins) count matrix and the two
    centre vectors.
    """
    lat_index, lat_centres = _bin_index(coordinates[:, 0], bins)
    lon_index, lon_centres = _bin_index(coordinates[:, 1], bins)
    counts = np.bincount(lat_index * bins + lon_index, minlength=bins * bins).reshape(bins, bins)
    rows, cols = np.nonzero(counts)
    data = Dataset(lat_centres[rows], lon_centres[cols], np.log(counts[rows, cols]),
                   LossKind.GAUSSIAN)
    return data, counts, lat_centres, lon_centres


def pixel_plateau_count(surface: np.ndarray, occupied: np.ndarray, scale: float,
                        rel_tol: float = 1e-4) -> int:
    """Plateaus of a fitted surface on the fully connected pixel grid, counted
    only when they cover at least one occupied bin."""
    surface = np.asarray(surface, dtype=float)
    labels = plateau_labels(surface.ravel(), grid_edges(surface.shape[0]), rel_tol, scale)
    return int(np.unique(labels[np.asarray(occupied, dtype=bool).ravel()]).size)


def cv_rmse(data: Dataset, config: FitConfig, folds: int, seed: int) -> float:
    """Pooled held-out RMSE of full refits over ``folds`` folds."""
    squared = 0.0
    for f, test in enumerate(fold_indices(data.n, folds, seed)):
        train = np.setdiff1d(np.arange(data.n), test)
        model = fit(data.subset(train), config)
        pred = predict(model, np.column_stack([data.x1[test], data.x2[test]]))
        squared += float(np.sum((pred - data.y[test]) ** 2))
        logger.debug("%s outer fold %d/%d done", config.method.value, f + 1, folds)
    return math.sqrt(squared / data.n)


class CrimeRecipeExecutor:
    """Bins point events on a 100 x 100 grid, models log counts and compares methods"""

    def __init__(self, points_path: str, out_dir: str, config: FitConfig,
                 lat_column: str = 'latitude', lon_column: str = 'longitude',
                 cv_folds: int = 20, console: Optional[Console] = None):
        self.points_path = Path(points_path)
        self.out_dir = Path(out_dir)
        self.config = config
        self.lat_column = lat_column
        self.lon_column = lon_column
        self.cv_folds = cv_folds
        self.console = console or Console()
        self.mapper = GapTVErrorMapper(str(self.points_path))
        self.results: Optional[pd.DataFrame] = None

    def execute_recipe(self) -> Tuple[List[str], List[CliError]]:
        changes = []
        errors = []
        try:
            coordinates = ingest_points(self.points_path, self.lat_column, self.lon_column)
            if coordinates.shape[0] == 0:
                raise DataError("No events to bin", line=2)
            if coordinates.shape[0] < MIN_RECOMMENDED_POINTS:
                logger.warning("Only %d events; the recipe expects at least %d",
                               coordinates.shape[0], MIN_RECOMMENDED_POINTS)
            data, counts, lat_centres, lon_centres = bin_log_counts(coordinates)
            if data.n < self.cv_folds:
                raise DataError(f"{data.n} occupied bins cannot be split into "
                                f"{self.cv_folds} cross-validation folds")
            binned = pd.DataFrame({'x1': data.x1, 'x2': data.x2, 'y': data.y})
            changes.append(f"Wrote binned data: {write_frame(self.out_dir / 'binned.csv', binned)}")
            log_counts = np.log(np.maximum(counts, 1))
            for path in write_heatmap(log_counts, self.out_dir / 'log_counts').values():
                changes.append(f"Wrote heatmap: {path}")
        except (GapTVError, OSError) as e:
            errors.append(self.mapper.map_error(e))
            return changes, errors

        centres = np.column_stack([np.repeat(lat_centres, RECIPE_BINS),
                                   np.tile(lon_centres, RECIPE_BINS)])
        records = []
        for method in RECIPE_METHODS:
            config = replace(self.config, method=method)
            try:
                with self.console.status(f"Fitting {method.value} on {data.n} occupied bins"):
                    model = fit(data, config)
                    rmse = cv_rmse(data, config, self.cv_folds, self.config.seed)
                surface = predict(model, centres).reshape(RECIPE_BINS, RECIPE_BINS)
                for path in write_heatmap(surface, self.out_dir / f"{method.value}_fit").values():
                    changes.append(f"Wrote heatmap: {path}")
            except (GapTVError, OSError) as e:
                errors.append(self.mapper.map_error(e, {'suggestion': f"Method {method.value} failed"}))
                records.append({'method': method.value, 'rmse': math.nan, 'plateaus': math.nan,
                                'pixel_plateaus': math.nan, 'aic': math.nan})
                continue
            if not model.converged:
                errors.append(self.mapper.non_convergence(f"The {method.value} fit"))
            cells = assign_cells(data.x1, data.x2, model.grid)
            scale = plateau_scale(aggregate_cells(data.y, cells, model.q, LossKind.GAUSSIAN),
                                  LossKind.GAUSSIAN)
            pixels = pixel_plateau_count(surface, counts > 0, scale, config.plateau_rel_tol)
            records.append({'method': method.value, 'rmse': rmse, 'plateaus': model.plateau_count,
                            'pixel_plateaus': pixels, 'aic': model.aic})

        self.results = pd.DataFrame.from_records(records, columns=['method', 'rmse', 'plateaus',
                                                                 'pixel_plateaus', 'aic'])
        try:
            changes.append(f"Wrote results: {write_frame(self.out_dir / 'results.csv', self.results)}")
        except OSError as e:
            errors.append(self.mapper.map_error(e))

        table = Table(show_header=True, title="Areal log-count models")
        for column in ("Method", "CV RMSE", "Grid plateaus", "Pixel plateaus", "AIC"):
            table.add_column(column, justify="left" if column == "Method" else "right")
        for row in records:
            table.add_row(row['method'], f"{row['rmse']:.4f}", f"{row['plateaus']:g}",
                          f"{row['pixel_plateaus']:g}", f"{row['aic']:.2f}")
        self.console.print(table)
        return changes, errors
