"""Model (de)serialization in the "gaptv-model/1" JSON document."""
from pathlib import Path
from typing import Any, Dict, Optional, Union
import json
import logging
import math
import os
import tempfile

import numpy as np

from .data_and_types import (
    FitMethod, GapScan, GapScanEntry, LossKind, Model, QuantileGrid,
)
from .exceptions import InvalidArgumentError, ModelFormatError

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = "gaptv-model/1"


def _encode_float(value: float) -> Optional[float]:
    value = float(value)
    return value if math.isfinite(value) else None


def _decode_float(value: Any, missing: float = math.nan) -> float:
    if value is None:
        return missing
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelFormatError(f"Expected a number, got {value!r}")
    return float(value)


def model_to_dict(model: Model) -> Dict[str, Any]:
    scan = model.gap_scan.entries if model.gap_scan is not None else ()
    return {
        'version': MODEL_FORMAT_VERSION,
        'method': model.method.value,
        'loss': model.loss_kind.value,
        'q': model.q,
        'breaks_x1': [float(b) for b in model.grid.breaks_x1],
        'breaks_x2': [float(b) for b in model.grid.breaks_x2],
        'lambda': _encode_float(model.lam),
        'beta': [float(b) for b in model.beta],
        'plateau_count': int(model.plateau_count),
        'aic': _encode_float(model.aic),
        'converged': bool(model.converged),
        'n_obs': int(model.n_obs),
        'gap_scan': [
            {'q': e.q, 'dispersion': _encode_float(e.dispersion),
             'null_term': _encode_float(e.null_term), 'gap': _encode_float(e.gap)}
            for e in scan
        ],
        'cv_table': [[_encode_float(lam), _encode_float(loss)] for lam, loss in model.cv_table],
    }


def model_from_dict(doc: Dict[str, Any]) -> Model:
    if not isinstance(doc, dict):
        raise ModelFormatError("Model document must be a JSON object")
    version = doc.get('version')
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"Unsupported model version {version!r}; expected '{MODEL_FORMAT_VERSION}'")
    try:
        method = FitMethod(doc['method'])
        loss_kind = LossKind(doc['loss'])
        q = int(doc['q'])
        grid = QuantileGrid(q, doc['breaks_x1'], doc['breaks_x2'])
        beta = np.array([_decode_float(b) for b in doc['beta']], dtype=float)
        gap_scan = None
        if doc.get('gap_scan'):
            gap_scan = GapScan(tuple(
                GapScanEntry(q=int(e['q']),
                             dispersion=_decode_float(e['dispersion']),
                             null_term=_decode_float(e['null_term']),
                             gap=_decode_float(e['gap'], missing=math.inf))
                for e in doc['gap_scan']))
        cv_table = tuple((_decode_float(lam), _decode_float(loss))
                         for lam, loss in doc.get('cv_table', []))
        lam = _decode_float(doc['lambda'], missing=math.inf)
        plateau_count = int(doc['plateau_count'])
        aic = _decode_float(doc['aic'])
    except KeyError as e:
        raise ModelFormatError(f"Model document is missing field {e}") from e
    except (TypeError, ValueError) as e:
        if isinstance(e, ModelFormatError):
            raise
        raise ModelFormatError(f"Malformed model document: {e}") from e

    if beta.size != q * q or not np.all(np.isfinite(beta)):
        raise ModelFormatError(f"beta must hold {q * q} finite values, got {beta.size}")
    if not 1 <= plateau_count <= q * q:
        raise ModelFormatError(f"plateau_count {plateau_count} outside [1, {q * q}]")
    beta.setflags(write=False)
    return Model(method=method, loss_kind=loss_kind, grid=grid, beta=beta, lam=lam,
                 plateau_count=plateau_count, aic=aic, gap_scan=gap_scan,
                 cv_table=cv_table, converged=bool(doc.get('converged', True)),
                 n_obs=int(doc.get('n_obs', 0)))


def dumps_model(model: Model) -> str:
    # json writes floats with repr, which round-trips every double exactly
    return json.dumps(model_to_dict(model), indent=2, allow_nan=False) + "\n"


def loads_model(text: str) -> Model:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"Model file is not valid JSON: {e.msg}",
                               line=e.lineno) from e
    return model_from_dict(doc)


def atomic_write(path: Union[str, Path], text: str) -> Path:
    """Write ``text`` next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def save_model(model: Model, path: Union[str, Path]) -> None:
    atomic_write(path, dumps_model(model))
    logger.debug("Wrote model to %s", path)


def load_model(path: Union[str, Path]) -> Model:
    path = Path(path)
    if not path.is_file():
        raise InvalidArgumentError(f"Model file not found: {path}")
    return loads_model(path.read_text(encoding='utf-8'))
