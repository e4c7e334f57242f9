import json
import logging
import time

import numpy as np
import pandas as pd
import pytest
import yaml
from click.testing import CliRunner

from bench.plateau_world import gen_plateau_world, sample_observations
from CLI.error_mapping.error_mappers import (
    CliErrorSeverity, ExitCode, GapTVErrorMapper, exit_code_for,
)
from CLI.executors.crime_recipe import pixel_plateau_count
from CLI.gaptv_cli import main
from CLI.utils.config import DEFAULT_CONFIG, command_default_map, load_config
from CLI.utils.file_preprocessing import ingest_csv, ingest_points
from gaptv.data_and_types import LossKind
from gaptv.exceptions import DataError, ModelFormatError, SelectionError, SolverError

FAST = ['--n-lambda', '4', '--max-iters', '20000', '--tol', '1e-6']


@pytest.fixture
def home(tmp_path, monkeypatch):
    path = tmp_path / 'home'
    monkeypatch.setenv('GAPTV_HOME', str(path))
    yield path
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, '_gaptv_handler', None):
            root.removeHandler(handler)
            handler.close()


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def data_csv(tmp_path):
    rng = np.random.default_rng(0)
    x1, x2 = rng.uniform(size=80), rng.uniform(size=80)
    y = np.where(x1 < 0.5, -1.0, 1.0) + rng.normal(scale=0.2, size=80)
    path = tmp_path / 'data.csv'
    pd.DataFrame({'x1': x1, 'x2': x2, 'y': y}).to_csv(path, index=False)
    return path


def _invoke(runner, args):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


def test_version(runner, home):
    result = _invoke(runner, ['--version'])
    assert result.exit_code == 0
    assert result.output.strip() == 'GapTV CLI v0.1.0'


def test_group_creates_config_and_log(runner, home):
    assert _invoke(runner, ['help']).exit_code == 0
    assert (home / 'config.yaml').is_file()
    assert (home / 'logs' / 'gaptv.log').is_file()


def test_fit_then_predict(runner, home, data_csv, tmp_path):
    model_path = tmp_path / 'model.json'
    result = _invoke(runner, ['fit', data_csv, '--out', model_path, '--q-max', '4'] + FAST)
    assert result.exit_code == 0, result.output
    assert 'method=gaptv' in result.output
    doc = json.loads(model_path.read_text())
    assert doc['version'] == 'gaptv-model/1'

    points = tmp_path / 'points.csv'
    points.write_text('x1,x2\n0.1,0.1\n0.9,0.9\n-5,12\n')
    out = tmp_path / 'pred.csv'
    result = _invoke(runner, ['predict', model_path, points, '--out', out])
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert list(frame.columns) == ['x1', 'x2', 'yhat']
    assert len(frame) == 3
    assert frame['yhat'].iloc[0] < 0 < frame['yhat'].iloc[1]


@pytest.mark.slow
def test_fit_then_predict_on_a_plateau_sample(runner, home, tmp_path):
    data = sample_observations(gen_plateau_world(0), 2000, seed=1)
    train = tmp_path / 'train.csv'
    pd.DataFrame({'x1': data.x1, 'x2': data.x2, 'y': data.y}).to_csv(train, index=False)
    model_path = tmp_path / 'model.json'
    out = tmp_path / 'pred.csv'

    start = time.perf_counter()
    fitted = _invoke(runner, ['fit', train, '--out', model_path, '--tol', '1e-6'])
    predicted = _invoke(runner, ['predict', model_path, train, '--out', out])
    elapsed = time.perf_counter() - start

    assert fitted.exit_code == 0, fitted.output
    assert predicted.exit_code == 0, predicted.output
    assert elapsed < 60.0
    yhat = pd.read_csv(out)['yhat'].to_numpy()
    assert np.sqrt(np.mean((yhat - data.y) ** 2)) <= np.std(data.y, ddof=1)


def test_predict_header_only_points(runner, home, data_csv, tmp_path):
    model_path = tmp_path / 'model.json'
    _invoke(runner, ['fit', data_csv, '--out', model_path, '--method', 'constant'])
    points = tmp_path / 'empty.csv'
    points.write_text('x1,x2\n')
    out = tmp_path / 'pred.csv'
    result = _invoke(runner, ['predict', model_path, points, '--out', out])
    assert result.exit_code == 0
    assert out.read_text() == 'x1,x2,yhat\n'


def test_fit_with_more_folds_than_points(runner, home, tmp_path):
    path = tmp_path / 'tiny.csv'
    path.write_text('x1,x2,y\n0,0,1\n1,1,2\n2,0,3\n')
    out = tmp_path / 'model.json'
    result = _invoke(runner, ['fit', path, '--out', out, '--folds', '5'])
    assert result.exit_code == 1
    assert not out.exists()


def test_fit_reports_bad_value_location(runner, home, tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text('x1,x2,y\n0,0,1\n1,oops,2\n')
    out = tmp_path / 'm.json'
    result = _invoke(runner, ['fit', path, '--out', out])
    assert result.exit_code == 1
    assert 'oops' in result.output
    assert not out.exists()


def test_predict_with_malformed_model(runner, home, tmp_path):
    model_path = tmp_path / 'model.json'
    model_path.write_text('{"version": "gaptv-model/1", "beta": [')
    points = tmp_path / 'points.csv'
    points.write_text('x1,x2\n0,0\n')
    out = tmp_path / 'pred.csv'
    result = _invoke(runner, ['predict', model_path, points, '--out', out])
    assert result.exit_code == 1
    assert not out.exists()


def test_gap_scan(runner, home, data_csv, tmp_path):
    out = tmp_path / 'scan.csv'
    result = _invoke(runner, ['gap-scan', data_csv, '--out', out, '--q-max', '5'])
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert frame['q'].tolist() == [2, 3, 4, 5]
    assert 'Selected q' in result.output


def test_invalid_gap_range(runner, home, data_csv):
    result = _invoke(runner, ['gap-scan', data_csv, '--q-min', '6', '--q-max', '3'])
    assert result.exit_code == 1


def test_benchmark_writes_reports(runner, home, tmp_path):
    out_dir = tmp_path / 'bench'
    result = _invoke(runner, ['benchmark', '--out-dir', out_dir, '--methods', 'constant',
                              '--n-values', '50', '--trials', '1', '--deterministic',
                              '--export-truth'])
    assert result.exit_code == 0, result.output
    report = pd.read_csv(out_dir / 'report.csv')
    assert report['method'].tolist() == ['constant']
    assert report['seconds'].tolist() == [0.0]
    assert (out_dir / 'report.jsonl').is_file()
    assert (out_dir / 'truth_trial0.pgm').read_text().startswith('P2\n100 100\n255\n')


def test_qscan(runner, home, tmp_path):
    out = tmp_path / 'qscan.csv'
    result = _invoke(runner, ['qscan', '--out', out, '--n', '100', '--q-min', '2',
                              '--q-max', '3', '--world-seed', '3'] + FAST)
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert frame['q'].tolist() == [2, 3]
    assert frame['selected'].sum() == 1


def test_crime_recipe(runner, home, tmp_path):
    rng = np.random.default_rng(1)
    events = pd.DataFrame({'latitude': 41.6 + 0.4 * rng.uniform(size=400),
                           'longitude': -87.9 + 0.4 * rng.beta(2, 5, size=400)})
    points = tmp_path / 'events.csv'
    events.to_csv(points, index=False)
    out_dir = tmp_path / 'crime'
    result = _invoke(runner, ['crime-recipe', points, '--out-dir', out_dir, '--cv-folds', '3',
                              '--q-max', '4', '--crisp-q', '4'] + FAST)
    assert result.exit_code == 0, result.output
    results = pd.read_csv(out_dir / 'results.csv')
    assert results['method'].tolist() == ['gaptv', 'gapcrisp', 'crisp_fixed_q']
    assert (out_dir / 'log_counts.pgm').is_file()
    assert (out_dir / 'gaptv_fit.json').is_file()
    assert list(results.columns) == ['method', 'rmse', 'plateaus', 'pixel_plateaus', 'aic']
    assert (results['pixel_plateaus'] >= 1).all()
    binned = pd.read_csv(out_dir / 'binned.csv')
    assert binned['y'].min() >= 0.0


def test_init_config_resets(runner, home):
    _invoke(runner, ['help'])
    (home / 'config.yaml').write_text('q_max: 7\n')
    result = _invoke(runner, ['init-config'])
    assert result.exit_code == 0
    assert yaml.safe_load((home / 'config.yaml').read_text()) == DEFAULT_CONFIG


class TestConfig:
    def test_bad_and_unknown_entries_are_skipped(self, home, caplog):
        home.mkdir(parents=True)
        (home / 'config.yaml').write_text('q_max: 12\nfolds: many\ncolour: blue\n')
        config = load_config()
        assert config['q_max'] == 12
        assert config['folds'] == DEFAULT_CONFIG['folds']
        assert 'colour' not in config
        assert "Unknown config key 'colour'" in caplog.text

    def test_default_map_excludes(self):
        default_map = command_default_map(DEFAULT_CONFIG, ['fit', 'crime-recipe'])
        assert default_map['fit']['q_max'] == 50
        assert 'q_max' not in default_map['crime-recipe']
        assert 'folds' not in default_map['crime-recipe']


class TestIngestion:
    def test_missing_column(self, tmp_path):
        path = tmp_path / 'd.csv'
        path.write_text('a,b,y\n1,2,3\n')
        with pytest.raises(DataError) as info:
            ingest_csv(path)
        assert info.value.line == 1
        assert info.value.column == 'x1'

    def test_header_only(self, tmp_path):
        path = tmp_path / 'd.csv'
        path.write_text('x1,x2,y\n')
        with pytest.raises(DataError):
            ingest_csv(path)

    def test_binary_labels(self, tmp_path):
        path = tmp_path / 'd.csv'
        path.write_text('x1,x2,y\n0,0,1\n1,1,0.5\n')
        with pytest.raises(DataError) as info:
            ingest_csv(path, LossKind.BINOMIAL)
        assert info.value.line == 3

    def test_extra_columns_and_custom_names(self, tmp_path):
        path = tmp_path / 'd.csv'
        path.write_text('id,lat,lon\n7,1.5,2.5\n8,3.0,4.0\n')
        points = ingest_points(path, 'lat', 'lon')
        np.testing.assert_array_equal(points, [[1.5, 2.5], [3.0, 4.0]])

    def test_blank_lines_keep_physical_line_numbers(self, tmp_path):
        path = tmp_path / 'd.csv'
        path.write_text('x1,x2,y\n0,0,1\n\n\n1,oops,2\n')
        with pytest.raises(DataError) as info:
            ingest_csv(path)
        assert info.value.line == 5
        assert info.value.column == 'x2'

    def test_blank_lines_are_skipped(self, tmp_path):
        path = tmp_path / 'd.csv'
        path.write_text('x1,x2,y\n0,0,1\n\n1,1,0\n\n')
        data = ingest_csv(path, LossKind.BINOMIAL)
        np.testing.assert_array_equal(data.y, [1.0, 0.0])

    def test_binary_label_line_after_blank(self, tmp_path):
        path = tmp_path / 'd.csv'
        path.write_text('x1,x2,y\n\n0,0,1\n1,1,0.5\n')
        with pytest.raises(DataError) as info:
            ingest_csv(path, LossKind.BINOMIAL)
        assert info.value.line == 4


class TestPixelPlateaus:
    def test_counts_regions_touching_occupied_bins(self):
        surface = np.zeros((4, 4))
        surface[2:] = 5.0
        occupied = np.ones((4, 4), dtype=bool)
        assert pixel_plateau_count(surface, occupied, scale=5.0) == 2
        occupied[2:] = False
        assert pixel_plateau_count(surface, occupied, scale=5.0) == 1

    def test_equal_values_apart_are_separate(self):
        surface = np.zeros((4, 4))
        surface[0, 0] = surface[3, 3] = 2.0
        assert pixel_plateau_count(surface, np.ones((4, 4), dtype=bool), scale=2.0) == 3

class TestErrorMapping:
    def test_exit_codes(self):
        mapper = GapTVErrorMapper('data.csv')
        data_error = mapper.map_error(DataError("bad", line=4, column='y'))
        assert data_error.exit_code == ExitCode.INPUT
        assert data_error.source_location.describe() == "data.csv (line 4, column 'y')"
        assert mapper.map_error(SolverError("nan")).exit_code == ExitCode.NUMERICAL
        assert mapper.map_error(SelectionError("none")).exit_code == ExitCode.INPUT
        assert 'Re-create' in mapper.map_error(ModelFormatError("v")).suggestion

    def test_non_convergence_is_a_numerical_warning(self):
        warning = GapTVErrorMapper().non_convergence("The final solve")
        assert warning.severity == CliErrorSeverity.WARNING
        assert exit_code_for([warning]) == 2
        assert exit_code_for([]) == 0

    def test_unknown_errors_propagate(self):
        with pytest.raises(KeyError):
            GapTVErrorMapper().map_error(KeyError('x'))
