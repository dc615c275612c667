"""
Тесты покоординатного подбора гиперпараметров
"""
import numpy as np
import pytest

from ketra.evaluation import LabeledTriples, Provenance, prepare_split
from ketra.exceptions import ConfigError, DatasetError, NumericalError
from ketra.ingestion import build_tensor
from ketra.training import FitConfig, Hyperparams, ModelKind
from ketra.training.search import coordinate_descent, default_grid, hyper_search, validation_metric


class CountingObjective:
    """Синтетическая метрика с максимумом в (lambda_A=1, lambda_r=10)"""

    def __init__(self):
        self.calls = []

    def __call__(self, h: Hyperparams) -> float:
        self.calls.append((h.lambda_A, h.lambda_r))
        return -abs(np.log10(h.lambda_A)) - abs(np.log10(h.lambda_r) - 1.0)


class TestCoordinateDescent:
    def test_finds_separable_optimum(self):
        objective = CountingObjective()
        grid = {'lambda_A': [100.0, 0.01, 1.0], 'lambda_r': [0.1, 10.0, 1000.0]}

        result = coordinate_descent(objective, Hyperparams(), grid)

        assert (result.best.lambda_A, result.best.lambda_r) == (1.0, 10.0)
        assert result.best_metric == 0.0
        assert result.passes == 2
        # каждая конфигурация оценивается один раз
        assert len(objective.calls) == len(set(objective.calls)) == len(result.trials)

    def test_first_value_wins_ties(self):
        grid = {'lambda_A': [5.0, 1.0, 3.0]}

        result = coordinate_descent(lambda h: -abs(h.lambda_A - 2.0), Hyperparams(), grid)

        assert result.best.lambda_A == 1.0

    def test_requires_strict_improvement(self):
        grid = {'lambda_A': [0.5, 1.0, 2.0], 'lambda_r': [0.5, 1.0]}

        result = coordinate_descent(lambda h: 0.25, Hyperparams(), grid)

        assert result.best.lambda_A == 0.5
        assert result.best.lambda_r == 0.5
        assert result.passes == 1

    def test_respects_max_passes(self):
        grid = {'lambda_A': [0.1, 1.0], 'lambda_r': [0.1, 1.0]}

        result = coordinate_descent(lambda h: h.lambda_A + h.lambda_r, Hyperparams(), grid, max_passes=1)

        assert result.passes == 1
        assert result.best_metric == 2.0

    def test_base_values_outside_grid_are_kept(self):
        base = Hyperparams(rank=4, rho=3.0)

        result = coordinate_descent(lambda h: -h.lambda_A, base, {'lambda_A': [1.0, 0.0]})

        assert result.best.rank == 4
        assert result.best.rho == 3.0
        assert result.best.lambda_A == 0.0

    def test_failed_configurations_lose(self):
        def objective(h):
            if h.lambda_A == 0.0:
                raise NumericalError("diverged")
            return h.lambda_A

        result = coordinate_descent(objective, Hyperparams(), {'lambda_A': [0.1, 0.0, 0.2]})

        assert result.best.lambda_A == 0.2
        failed = [trial for trial in result.trials if trial.error]
        assert len(failed) == 1
        assert failed[0].metric == -np.inf

    def test_threads_do_not_change_result(self):
        grid = {'lambda_A': [100.0, 0.01, 1.0], 'lambda_r': [0.1, 10.0, 1000.0]}

        serial = coordinate_descent(CountingObjective(), Hyperparams(), grid)
        parallel = coordinate_descent(CountingObjective(), Hyperparams(), grid, threads=3)

        assert serial.best == parallel.best
        assert [t.params for t in serial.trials] == [t.params for t in parallel.trials]

    @pytest.mark.parametrize('grid', [{'lambda_z': [1.0]}, {'lambda_A': []}])
    def test_invalid_grid(self, grid):
        with pytest.raises(ConfigError):
            coordinate_descent(lambda h: 0.0, Hyperparams(), grid)


@pytest.mark.parametrize('kind,expected', [
    (ModelKind.RESCAL, ['lambda_A', 'lambda_r']),
    (ModelKind.NN_RESCAL, ['lambda_A', 'lambda_r']),
    (ModelKind.QUAD_REG, ['lambda_A', 'lambda_r', 'lambda_s']),
    (ModelKind.QUAD_CONSTRAINT, ['lambda_A', 'lambda_r']),
    (ModelKind.LINEAR_REG, ['lambda_A', 'lambda_r', 'lambda_e', 'lambda_s']),
    (ModelKind.LINEAR_CONSTRAINT, ['lambda_A', 'lambda_r', 'lambda_e']),
])
def test_default_grid(kind, expected):
    grid = default_grid(kind)

    assert list(grid) == expected
    assert grid['lambda_A'] == [0.0001, 0.01, 0.1, 0, 1, 10, 100, 1000]


class TestHyperSearch:
    def test_search_on_validation_set(self, small_graph):
        split = prepare_split(small_graph, seed=3)
        x = build_tensor(split.train)
        grid = {'lambda_A': [0.1, 10.0], 'lambda_r': [0.1, 10.0]}

        result = hyper_search(
            'rescal', x, None, split.validation, grid=grid,
            base=Hyperparams(rank=3), cfg=FitConfig(max_iter=3), return_result=True
        )

        assert result.best.lambda_A in grid['lambda_A']
        assert result.best.rank == 3
        assert result.best_metric == max(trial.metric for trial in result.trials)
        assert 0.0 <= result.best_metric <= 1.0

    def test_returns_hyperparams_by_default(self, small_graph):
        split = prepare_split(small_graph, seed=3)

        best = hyper_search(
            ModelKind.RESCAL, build_tensor(split.train), None, split.validation,
            grid={'lambda_A': [0.1]}, metric='f1_micro', cfg=FitConfig(max_iter=2)
        )

        assert isinstance(best, Hyperparams)
        assert best.lambda_A == 0.1

    def test_single_class_validation(self, small_tensor):
        validation = LabeledTriples(
            triples=np.array([(0, 0, 1), (1, 0, 2)]), labels=np.array([1, 1]), provenance=Provenance.EXTERNAL_FILE
        )

        with pytest.raises(DatasetError):
            hyper_search('rescal', small_tensor, None, validation)

    def test_unknown_metric(self, small_graph, small_tensor):
        split = prepare_split(small_graph, seed=3)

        with pytest.raises(ConfigError):
            hyper_search('rescal', small_tensor, None, split.validation, metric='mrr')
        with pytest.raises(ConfigError):
            validation_metric('mrr', np.zeros(len(split.validation)), split.validation)
