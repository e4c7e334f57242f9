"""Report writers: CSV, JSON lines, truth-grid matrices and plain PGM images."""
from pathlib import Path
from typing import Dict, Optional, Tuple, Union
import io
import json
import math

import numpy as np
import pandas as pd

from gaptv.exceptions import InvalidArgumentError
from gaptv.model_io import atomic_write

from .benchmark import REPORT_COLUMNS, BenchmarkReport, QScanResult
from .plateau_world import PlateauWorld

PGM_MAXVAL = 255


def _frame_csv(frame: pd.DataFrame, header: bool = True) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, header=header, lineterminator="\n")
    return buffer.getvalue()


def render_report_csv(report: BenchmarkReport) -> str:
    return _frame_csv(report.to_frame()[list(REPORT_COLUMNS)])


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, np.generic):
        return _json_value(value.item())
    return value


def render_report_jsonl(report: BenchmarkReport) -> str:
    lines = []
    for record in report.to_frame().to_dict(orient='records'):
        clean = {k: _json_value(v) for k, v in record.items()}
        lines.append(json.dumps(clean, sort_keys=False, allow_nan=False))
    return "".join(line + "\n" for line in lines)


def render_qscan_csv(result: QScanResult) -> str:
    frame = result.to_frame()
    frame['selected'] = frame['selected'].astype(int)
    return _frame_csv(frame)


def render_matrix_csv(matrix) -> str:
    return _frame_csv(pd.DataFrame(np.asarray(matrix, dtype=float)), header=False)


def render_pgm(matrix, value_range: Optional[Tuple[float, float]] = None) -> Tuple[str, Tuple[float, float]]:
    """Plain (P2) greyscale image of ``matrix`` with linear min-max scaling.

    Returns the image text and the (min, max) range mapped to 0 and 255.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise InvalidArgumentError("PGM export needs a nonempty 2-D matrix")
    if not np.all(np.isfinite(m)):
        raise InvalidArgumentError("PGM export needs finite values")
    lo, hi = value_range if value_range is not None else (float(m.min()), float(m.max()))
    if hi > lo:
        pixels = np.rint((np.clip(m, lo, hi) - lo) / (hi - lo) * PGM_MAXVAL).astype(int)
    else:
        pixels = np.zeros(m.shape, dtype=int)
    rows = [" ".join(str(v) for v in row) for row in pixels]
    header = f"P2\n{m.shape[1]} {m.shape[0]}\n{PGM_MAXVAL}\n"
    return header + "\n".join(rows) + "\n", (lo, hi)


def write_report_csv(report: BenchmarkReport, path: Union[str, Path]) -> Path:
    return atomic_write(path, render_report_csv(report))


def write_report_jsonl(report: BenchmarkReport, path: Union[str, Path]) -> Path:
    return atomic_write(path, render_report_jsonl(report))


def write_qscan_csv(result: QScanResult, path: Union[str, Path]) -> Path:
    return atomic_write(path, render_qscan_csv(result))


def write_heatmap(matrix, path_stem: Union[str, Path]) -> Dict[str, Path]:
    """``<stem>.pgm`` plus ``<stem>.json`` recording the value range of the grey levels."""
    stem = Path(path_stem)
    image, (lo, hi) = render_pgm(matrix)
    pgm = atomic_write(stem.with_suffix('.pgm'), image)
    sidecar = atomic_write(stem.with_suffix('.json'),
                           json.dumps({'min': lo, 'max': hi, 'maxval': PGM_MAXVAL}) + "\n")
    return {'pgm': pgm, 'json': sidecar}


def export_truth(world: PlateauWorld, path_stem: Union[str, Path]) -> Dict[str, Path]:
    stem = Path(path_stem)
    paths = {'csv': atomic_write(stem.with_suffix('.csv'), render_matrix_csv(world.truth))}
    paths.update(write_heatmap(world.truth, stem))
    return paths
