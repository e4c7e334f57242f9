import logging
import math

import numpy as np
import pytest
from scipy import special

from gaptv import gap as gap_module
from gaptv.data_and_types import Dataset, GapConfig, GapMode, GapScanEntry, LossKind
from gaptv.exceptions import (
    DegenerateDistributionError, DomainError, InvalidArgumentError, SelectionError,
)
from gaptv.gap import (
    binomial_null_log_expect, digamma, gap_score, gaussian_null_log_expect,
    pairwise_dispersion, select_q,
)
from gaptv.grid import assign_cells, build_grid


def _blocky(n=400, seed=0):
    """Two half-planes with different means."""
    rng = np.random.default_rng(seed)
    x1, x2 = rng.uniform(size=n), rng.uniform(size=n)
    y = np.where(x1 < 0.5, -2.0, 2.0) + rng.normal(scale=0.3, size=n)
    return Dataset(x1, x2, y)


class TestDigamma:
    def test_known_values(self):
        assert digamma(1.0) == pytest.approx(-0.5772156649, abs=1e-10)
        assert digamma(10.0) == pytest.approx(2.2517525891, abs=1e-10)

    def test_matches_scipy(self):
        for x in (0.01, 0.5, 1.5, 3.7, 9.99, 25.0, 1e4):
            assert digamma(x) == pytest.approx(float(special.digamma(x)), rel=1e-12, abs=1e-12)

    def test_recurrence(self):
        for x in np.linspace(0.1, 100.0, 250):
            assert digamma(float(x) + 1.0) - digamma(float(x)) == pytest.approx(1.0 / x, abs=1e-10)

    @pytest.mark.parametrize("x", [0.0, -1.0, math.inf, math.nan])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            digamma(x)


class TestNullTerms:
    def test_gaussian(self):
        assert gaussian_null_log_expect(2.0) == pytest.approx(
            math.log(2.0) - 0.5772156649, abs=1e-9)
        n = 4
        assert gaussian_null_log_expect(n * n / 2 - n) == pytest.approx(
            math.log(2.0) + digamma(2.0))
        with pytest.raises(DomainError):
            gaussian_null_log_expect(0.0)

    @pytest.mark.parametrize("nu", [2, 6, 40])
    def test_gaussian_monte_carlo(self, nu):
        rng = np.random.default_rng(nu)
        logs = np.log(rng.chisquare(nu, size=1_000_000))
        stderr = logs.std(ddof=1) / math.sqrt(logs.size)
        assert abs(gaussian_null_log_expect(nu) - logs.mean()) <= 3 * stderr

    def test_binomial(self):
        # log(2475) - 0.5 / 4950
        assert binomial_null_log_expect(100, 0.5) == pytest.approx(7.813895, abs=1e-6)

    def test_binomial_correction_vanishes(self):
        value = binomial_null_log_expect(100000, 0.3)
        m = (100000 ** 2 - 100000) / 2
        assert value == pytest.approx(math.log(2 * 0.3 * 0.7 * m), abs=1e-9)

    @pytest.mark.parametrize("n, p", [(40, 0.4), (50, 0.3), (100, 0.5)])
    def test_binomial_monte_carlo(self, n, p):
        rng = np.random.default_rng(n)
        m = (n * n - n) // 2
        draws = rng.binomial(m, 2 * p * (1 - p), size=1_000_000)
        assert binomial_null_log_expect(n, p) == pytest.approx(np.mean(np.log(draws)), rel=1e-3)


    @pytest.mark.parametrize("p", [0.0, 1.0])
    def test_binomial_degenerate(self, p):
        with pytest.raises(DegenerateDistributionError):
            binomial_null_log_expect(10, p)


class TestDispersion:
    def test_constant_cell(self):
        assert pairwise_dispersion([1, 1, 1], [0, 0, 0]) == 0.0

    def test_single_pair(self):
        assert pairwise_dispersion([0, 2], [0, 0]) == pytest.approx(2.0)

    def test_matches_double_loop(self):
        rng = np.random.default_rng(7)
        y = rng.normal(size=30)
        cells = rng.integers(0, 4, size=30)
        expected = 0.0
        for k in range(4):
            yk = y[cells == k]
            total = sum((yk[i] - yk[j]) ** 2 for i in range(yk.size) for j in range(i + 1, yk.size))
            if yk.size:
                expected += total / yk.size
        assert pairwise_dispersion(y, cells) == pytest.approx(expected, abs=1e-12)
        assert pairwise_dispersion(y, cells, method="pairs") == pytest.approx(expected, abs=1e-12)

    def test_unknown_method(self):
        with pytest.raises(InvalidArgumentError):
            pairwise_dispersion([1.0], [0], method="fast")


class TestGapScore:
    def test_one_point_per_cell_literal(self):
        data = Dataset([0, 0, 1, 1], [0, 1, 0, 1], [1.0, 5.0, -2.0, 0.5])
        entry = gap_score(data, 2, GapConfig(mode=GapMode.LITERAL))
        assert entry.dispersion == 0.0
        # nu = n^2 / 2 - n = 4
        assert entry.gap == pytest.approx(digamma(2.0))

    def test_zero_dispersion_is_infinite_under_log_modes(self):
        data = Dataset([0, 0, 1, 1], [0, 1, 0, 1], [1.0, 5.0, -2.0, 0.5])
        for mode in (GapMode.LOG_DISPERSION, GapMode.PER_CELL_NULL):
            assert gap_score(data, 2, GapConfig(mode=mode)).gap == math.inf

    def test_log_dispersion_value(self):
        data = _blocky(n=100)
        entry = gap_score(data, 3, GapConfig(mode=GapMode.LOG_DISPERSION))
        nu = 100 * 100 / 2 - 100
        expected = math.log(2.0) + digamma(nu / 2) - math.log(entry.dispersion)
        assert entry.gap == pytest.approx(expected)

    def test_per_cell_null_degrees_of_freedom(self):
        data = _blocky(n=100)
        entry = gap_score(data, 2, GapConfig())
        counts = np.bincount(assign_cells(data.x1, data.x2, build_grid(data, 2)), minlength=4)
        nu = float(np.sum(np.maximum(counts ** 2 / 2 - counts, 0)))
        assert entry.null_term == pytest.approx(gaussian_null_log_expect(nu))

    def test_loss_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            gap_score(_blocky(), 2, GapConfig(loss_kind=LossKind.BINOMIAL))


class TestSelectQ:
    def test_scan_covers_range(self):
        q, scan = select_q(_blocky(), GapConfig(q_min=2, q_max=8))
        assert scan.qs.tolist() == list(range(2, 9))
        assert q == scan.qs[scan.argmin()]
        assert np.all(scan.gaps[scan.qs == q] <= scan.gaps[np.isfinite(scan.gaps)].min())

    def test_q_max_clamped_to_n(self):
        data = Dataset(np.arange(6.0), np.arange(6.0)[::-1], np.arange(6.0) ** 2)
        _, scan = select_q(data, GapConfig(q_min=2, q_max=50, mode=GapMode.LITERAL))
        assert scan.qs.max() == 6

    def test_single_point(self):
        with pytest.raises(SelectionError) as info:
            select_q(Dataset([0.0], [0.0], [1.0]), GapConfig())
        assert info.value.scan is not None

    def test_all_infinite(self):
        # two points, one per cell at every q: no pairs, so no finite score
        data = Dataset([0.0, 1.0], [0.0, 1.0], [0.0, 1.0])
        with pytest.raises(SelectionError) as info:
            select_q(data, GapConfig(q_max=2))
        assert len(info.value.scan) == 1

    def test_ties_go_to_smaller_q(self, monkeypatch):
        monkeypatch.setattr(gap_module, 'gap_score',
                            lambda data, q, config: GapScanEntry(q, 1.0, 0.0, -1.0))
        q, _ = select_q(_blocky(), GapConfig(q_min=3, q_max=6))
        assert q == 3

    def test_constant_response(self, caplog):
        data = Dataset(np.arange(10.0), np.arange(10.0), np.full(10, 4.0))
        with caplog.at_level(logging.WARNING):
            q, _ = select_q(data, GapConfig(q_min=3, q_max=5))
        assert q == 3
        assert "All responses are equal" in caplog.text

    def test_binomial_scan_is_finite(self):
        rng = np.random.default_rng(9)
        x1, x2 = rng.uniform(size=300), rng.uniform(size=300)
        y = (rng.uniform(size=300) < np.where(x1 < 0.5, 0.2, 0.8)).astype(float)
        q, scan = select_q(Dataset(x1, x2, y, LossKind.BINOMIAL), GapConfig(q_max=6))
        assert 2 <= q <= 6
        assert np.any(np.isfinite(scan.gaps))

    @pytest.mark.parametrize("mode", [GapMode.PER_CELL_NULL, GapMode.LOG_DISPERSION])
    @pytest.mark.parametrize("scale", [1000.0, 1e-3])
    def test_choice_ignores_response_scale(self, mode, scale):
        data = _blocky(n=400, seed=3)
        config = GapConfig(q_min=2, q_max=12, mode=mode)
        q, scan = select_q(data, config)
        scaled_q, scaled = select_q(Dataset(data.x1, data.x2, scale * data.y), config)
        assert scaled_q == q
        finite = np.isfinite(scan.gaps)
        np.testing.assert_allclose(scaled.gaps[finite] - scan.gaps[finite],
                                   -2.0 * math.log(scale), atol=1e-9)
