import logging
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from gaptv.crisp import (
    crisp_objective, crisp_penalty, grid_laplacian, group_soft_threshold, solve_crisp,
)
from gaptv.data_and_types import CrispProblem, LossKind, SolverSettings
from gaptv.exceptions import InvalidArgumentError
from gaptv.grid import aggregate_cells, grid_edges
from gaptv.pipeline import count_plateaus


def _aggregates(eta, means, q):
    cells = np.repeat(np.arange(q * q), eta)
    return aggregate_cells(np.repeat(np.asarray(means, dtype=float), eta), cells, q)


def _smoothed_oracle(problem, starts, seed=0, eps=1e-9):
    """Best L-BFGS optimum of the objective with every group norm smoothed by eps."""
    q = problem.q
    agg = problem.aggregates
    eta = agg.counts.astype(float)
    ybar = np.nan_to_num(agg.means)

    def smooth(beta):
        M = beta.reshape(q, q)
        rows = np.sqrt(np.sum((M[1:] - M[:-1]) ** 2, axis=1) + eps ** 2).sum()
        cols = np.sqrt(np.sum((M[:, 1:] - M[:, :-1]) ** 2, axis=0) + eps ** 2).sum()
        return 0.5 * np.sum(eta * (ybar - beta) ** 2) + problem.lam * (rows + cols)

    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(starts):
        result = minimize(smooth, rng.normal(size=q * q), method='L-BFGS-B',
                          options={'ftol': 1e-15, 'gtol': 1e-12, 'maxiter': 20000})
        best = min(best, crisp_objective(result.x, problem))
    return best


class TestPenalty:
    def test_constant_matrix(self):
        assert crisp_penalty(np.full((4, 4), 2.5)) == 0.0

    def test_two_by_two(self):
        assert crisp_penalty([[0, 0], [1, 1]]) == pytest.approx(math.sqrt(2.0))

    def test_matches_direct_summation(self):
        M = np.random.default_rng(3).normal(size=(5, 5))
        expected = 0.0
        for i in range(4):
            expected += math.sqrt(sum((M[i + 1, j] - M[i, j]) ** 2 for j in range(5)))
        for j in range(4):
            expected += math.sqrt(sum((M[i, j + 1] - M[i, j]) ** 2 for i in range(5)))
        assert crisp_penalty(M) == pytest.approx(expected, abs=1e-12)

    def test_requires_square(self):
        with pytest.raises(InvalidArgumentError):
            crisp_penalty(np.zeros((2, 3)))


class TestGroupSoftThreshold:
    def test_inside_ball(self):
        np.testing.assert_array_equal(group_soft_threshold([0.3, 0.4], 0.5), [0.0, 0.0])

    def test_zero_threshold(self):
        np.testing.assert_array_equal(group_soft_threshold([3.0, 4.0], 0.0), [3.0, 4.0])

    def test_shrinks_norm(self):
        np.testing.assert_allclose(group_soft_threshold([3.0, 4.0], 1.0), [2.4, 3.2])

    def test_negative_threshold(self):
        with pytest.raises(InvalidArgumentError):
            group_soft_threshold([1.0], -1.0)


class TestLaplacian:
    def test_row_sums_and_degrees(self):
        L = grid_laplacian(4).toarray()
        np.testing.assert_allclose(L.sum(axis=1), 0.0)
        degree = np.bincount(grid_edges(4).edges.ravel(), minlength=16)
        np.testing.assert_array_equal(np.diag(L), degree)
        np.testing.assert_array_equal(L, L.T)


class TestSolveCrisp:
    def test_zero_lambda(self):
        agg = _aggregates([1, 0, 2, 1], [2.0, 0.0, -1.0, 5.0], 2)
        solution = solve_crisp(CrispProblem(agg, 2, 0.0))
        pooled = (2.0 - 2.0 + 5.0) / 4
        np.testing.assert_allclose(solution.beta, [2.0, pooled, -1.0, 5.0])

    def test_large_lambda_is_constant(self):
        rng = np.random.default_rng(2)
        agg = _aggregates(rng.integers(1, 4, size=25), rng.normal(size=25), 5)
        solution = solve_crisp(CrispProblem(agg, 5, 1e3))
        np.testing.assert_allclose(solution.beta, agg.pooled_mean, atol=1e-4)
        assert count_plateaus(solution.beta, grid_edges(5), rel_tol=1e-3, scale=1.0) == 1

    @pytest.mark.parametrize("seed", [0, 1])
    def test_no_worse_than_generic_optimizer(self, seed):
        rng = np.random.default_rng(seed)
        eta = rng.integers(0, 4, size=9)
        eta[4] = max(eta[4], 1)
        problem = CrispProblem(_aggregates(eta, rng.normal(size=9), 3), 3, 0.5)
        solution = solve_crisp(problem, SolverSettings(tol=1e-10, max_iters=20000))
        oracle = _smoothed_oracle(problem, starts=10, seed=seed)
        assert solution.objective <= oracle + 1e-6
        assert solution.objective == pytest.approx(crisp_objective(solution.beta, problem))

    def test_history_is_monotone(self):
        rng = np.random.default_rng(7)
        agg = _aggregates(rng.integers(0, 3, size=36), rng.normal(size=36), 6)
        solution = solve_crisp(CrispProblem(agg, 6, 0.4))
        assert np.all(np.diff(solution.history) <= 0)

    def test_rejects_binomial(self):
        agg = aggregate_cells(np.array([1.0, 0.0]), np.array([0, 3]), 2, LossKind.BINOMIAL)
        with pytest.raises(InvalidArgumentError):
            CrispProblem(agg, 2, 1.0)


@pytest.mark.slow
@pytest.mark.parametrize("q", [2, 3])
@pytest.mark.parametrize("lam", [0.1, 0.7, 3.0])
def test_random_instances_no_worse_than_oracle(q, lam):
    settings = SolverSettings(tol=1e-10, max_iters=20000)
    for seed in range(17):
        rng = np.random.default_rng(2000 * q + seed)
        eta = rng.integers(0, 4, size=q * q)
        eta[int(rng.integers(q * q))] = max(1, eta.max())
        problem = CrispProblem(_aggregates(eta, rng.normal(size=q * q), q), q, lam)
        solution = solve_crisp(problem, settings)
        oracle = _smoothed_oracle(problem, starts=3, seed=seed)
        assert solution.objective <= oracle + 1e-5 * abs(oracle) + 1e-9


def test_path_settings_silence_the_iteration_warning(caplog):
    rng = np.random.default_rng(7)
    agg = _aggregates(rng.integers(0, 3, size=36), rng.normal(size=36), 6)
    settings = SolverSettings(path_max_iters=2).along_path()
    with caplog.at_level(logging.WARNING):
        solution = solve_crisp(CrispProblem(agg, 6, 0.4), settings)
    assert solution.iterations == 2 and not solution.converged
    assert "without converging" not in caplog.text
