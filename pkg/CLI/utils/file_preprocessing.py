from pathlib import Path
from typing import Optional, Sequence, Union
import logging

import numpy as np
import pandas as pd

from gaptv.data_and_types import Dataset, LossKind
from gaptv.exceptions import DataError
from gaptv.model_io import atomic_write

logger = logging.getLogger(__name__)

# the header is line 1; rows keep their physical line number as the index
_FIRST_DATA_LINE = 2


def _read_table(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Input file not found: {path}")
    try:
        table = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8',
                            skipinitialspace=True, skip_blank_lines=False)
    except pd.errors.EmptyDataError as e:
        raise DataError(f"Input file {path} is empty", line=1) from e
    except pd.errors.ParserError as e:
        raise DataError(f"Could not parse {path} as CSV: {e}") from e
    except UnicodeDecodeError as e:
        raise DataError(f"Input file {path} is not UTF-8 text") from e
    table.index = pd.RangeIndex(_FIRST_DATA_LINE, _FIRST_DATA_LINE + len(table))
    blank = (table.fillna('') == '').all(axis=1)
    return table[~blank]


def _numeric_column(table: pd.DataFrame, column: str) -> np.ndarray:
    if column not in table.columns:
        raise DataError(f"Missing column '{column}'; found {list(table.columns)}",
                        line=1, column=column)
    raw = table[column]
    values = pd.to_numeric(raw, errors='coerce').to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        row = int(np.flatnonzero(bad)[0])
        raise DataError(f"Value {raw.iloc[row]!r} is not a finite number",
                        line=int(raw.index[row]), column=column)
    return values


def ingest_csv(path: Union[str, Path], loss_kind: LossKind = LossKind.GAUSSIAN,
               x1_column: str = 'x1', x2_column: str = 'x2', y_column: str = 'y') -> Dataset:
    """
    Read a UTF-8 CSV with a header into a Dataset. Extra columns are ignored;
    every rejected row is reported with its line number.
    """
    table = _read_table(path)
    x1 = _numeric_column(table, x1_column)
    x2 = _numeric_column(table, x2_column)
    y = _numeric_column(table, y_column)
    if y.size == 0:
        raise DataError(f"Input file {path} has a header but no data rows", line=_FIRST_DATA_LINE)
    if loss_kind == LossKind.BINOMIAL:
        bad = (y != 0.0) & (y != 1.0)
        if np.any(bad):
            row = int(np.flatnonzero(bad)[0])
            raise DataError(f"Binary label must be 0 or 1, got {table[y_column].iloc[row]!r}",
                            line=int(table.index[row]), column=y_column)
    logger.debug("Read %d observations from %s", y.size, path)
    return Dataset(x1, x2, y, loss_kind)


def ingest_points(path: Union[str, Path], x1_column: str = 'x1',
                  x2_column: str = 'x2') -> np.ndarray:
    """(m, 2) array of prediction points; a header-only file gives m = 0."""
    table = _read_table(path)
    return np.column_stack([_numeric_column(table, x1_column),
                            _numeric_column(table, x2_column)]).reshape(-1, 2)


def write_table(path: Union[str, Path], columns: Sequence[str], rows) -> Path:
    frame = pd.DataFrame(np.asarray(rows, dtype=float).reshape(-1, len(columns)),
                         columns=list(columns))
    return atomic_write(path, frame.to_csv(index=False, lineterminator='\n'))


def write_predictions(path: Union[str, Path], points: np.ndarray, yhat: np.ndarray) -> Path:
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    return write_table(path, ('x1', 'x2', 'yhat'),
                       np.column_stack([points, np.asarray(yhat, dtype=float)]))


def write_frame(path: Union[str, Path], frame: pd.DataFrame,
                float_format: Optional[str] = None) -> Path:
    return atomic_write(path, frame.to_csv(index=False, lineterminator='\n',
                                           float_format=float_format))
