import json
import math

import numpy as np
import pytest

from gaptv.data_and_types import Dataset, FitConfig, FitMethod, GapConfig, SolverSettings
from gaptv.exceptions import InvalidArgumentError, ModelFormatError
from gaptv.model_io import (
    MODEL_FORMAT_VERSION, atomic_write, dumps_model, load_model, loads_model, model_to_dict,
    save_model,
)
from gaptv.pipeline import fit, predict


@pytest.fixture(scope='module')
def model():
    rng = np.random.default_rng(0)
    x1, x2 = rng.uniform(size=120), rng.uniform(size=120)
    y = np.where(x1 < 0.5, 1.0, -1.0) + rng.normal(scale=0.3, size=120)
    config = FitConfig(n_lambda=6, gap=GapConfig(q_max=6),
                       solver=SolverSettings(tol=1e-6, max_iters=2000))
    return fit(Dataset(x1, x2, y), config)


def test_document_layout(model):
    doc = model_to_dict(model)
    assert doc['version'] == MODEL_FORMAT_VERSION
    assert doc['method'] == 'gaptv'
    assert len(doc['beta']) == model.q ** 2
    assert len(doc['breaks_x1']) == len(doc['breaks_x2']) == model.q - 1
    assert [e['q'] for e in doc['gap_scan']] == list(range(2, 7))


def test_reload_predicts_identically(model, tmp_path):
    path = tmp_path / 'nested' / 'model.json'
    save_model(model, path)
    loaded = load_model(path)
    points = np.random.default_rng(1).uniform(-0.5, 1.5, size=(200, 2))
    np.testing.assert_array_equal(predict(loaded, points), predict(model, points))
    assert loaded.lam == model.lam
    assert loaded.plateau_count == model.plateau_count
    assert loaded.cv_table == model.cv_table


def test_infinite_values_are_written_as_null():
    data = Dataset([0, 1, 2, 3], [3, 2, 1, 0], [1.0, 2.0, 3.0, 4.0])
    constant = fit(data, FitConfig(method=FitMethod.CONSTANT))
    text = dumps_model(constant)
    assert json.loads(text)['lambda'] is None
    assert loads_model(text).lam == math.inf


def test_rejects_unknown_version(model):
    doc = model_to_dict(model)
    doc['version'] = 'gaptv-model/0'
    with pytest.raises(ModelFormatError):
        loads_model(json.dumps(doc))


def test_rejects_wrong_beta_length(model):
    doc = model_to_dict(model)
    doc['beta'] = doc['beta'][:-1]
    with pytest.raises(ModelFormatError):
        loads_model(json.dumps(doc))


def test_rejects_missing_field(model):
    doc = model_to_dict(model)
    del doc['breaks_x1']
    with pytest.raises(ModelFormatError, match='breaks_x1'):
        loads_model(json.dumps(doc))


def test_rejects_plateau_count_out_of_range(model):
    doc = model_to_dict(model)
    doc['plateau_count'] = 0
    with pytest.raises(ModelFormatError):
        loads_model(json.dumps(doc))


def test_invalid_json_reports_line():
    with pytest.raises(ModelFormatError) as info:
        loads_model('{\n  "version": \n}')
    assert info.value.line == 3


def test_missing_file(tmp_path):
    with pytest.raises(InvalidArgumentError):
        load_model(tmp_path / 'absent.json')


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = atomic_write(tmp_path / 'out.txt', 'first\n')
    atomic_write(target, 'second\n')
    assert target.read_text() == 'second\n'
    assert [p.name for p in tmp_path.iterdir()] == ['out.txt']
