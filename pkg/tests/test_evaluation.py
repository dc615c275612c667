"""
Тесты протокола оценки и анализа плотности
"""
import numpy as np
import pandas as pd
import pytest

from ketra.evaluation import (
    EvalMode,
    density_sweep,
    density_to_csv,
    evaluate_model,
    export_report,
    make_test_set,
    prepare_split,
    resolve_per_slice,
)
from ketra.exceptions import ConfigError, DatasetError
from ketra.training import FitConfig, Hyperparams, ModelKind, init_factors

CFG = FitConfig(max_iter=5)
H = Hyperparams(rank=3, lambda_A=0.5, lambda_r=0.5)


def as_set(triples):
    return set(map(tuple, np.asarray(triples).tolist()))


@pytest.mark.parametrize('n_entities,per_slice,expected', [
    (100, None, 10),
    (14999, None, 10),
    (15000, None, 200),
    (100000, 7, 7),
])
def test_resolve_per_slice(n_entities, per_slice, expected):
    assert resolve_per_slice(n_entities, per_slice) == expected


class TestPrepareSplit:
    def test_uniform_split_partitions_facts(self, small_graph):
        split = prepare_split(small_graph, seed=4)

        train = split.train.triple_set()
        test_pos = as_set(split.test.positives)
        val_pos = as_set(split.validation.positives)
        assert not train & test_pos
        assert not train & val_pos
        assert not test_pos & val_pos
        assert train | test_pos | val_pos == small_graph.triple_set()
        assert not as_set(split.validation.negatives) & small_graph.triple_set()
        assert split.seed == 4

    def test_weighted_split(self, small_graph):
        positives = small_graph.triples[:12]

        split = prepare_split(small_graph, EvalMode.STRATIFIED_WEIGHTED, seed=1, external_positives=positives)

        assert int(split.test.labels.sum()) == 12
        assert len(split.test.negatives) == 8
        assert not split.train.triple_set() & as_set(positives)

    def test_external_split(self, small_graph):
        external, _ = make_test_set(small_graph, per_slice=5, seed=9)

        split = prepare_split(small_graph, 'external_file', seed=1, external_test=external)

        assert split.test is external
        assert not split.train.triple_set() & as_set(external.positives)

    @pytest.mark.parametrize('mode', [EvalMode.STRATIFIED_WEIGHTED, EvalMode.EXTERNAL_FILE])
    def test_external_modes_need_input(self, small_graph, mode):
        with pytest.raises(ConfigError):
            prepare_split(small_graph, mode, seed=1)


class TestEvaluateModel:
    def test_repeats_use_consecutive_seeds(self, small_graph):
        summary = evaluate_model(small_graph, ModelKind.RESCAL, H, CFG, repeats=2, seed=10)

        assert summary.seeds == [10, 11]
        assert len(summary.reports) == 2
        overall = summary.overall_frame().set_index('metric')
        aucs = [report.auc for report in summary.reports]
        assert overall.loc['auc', 'mean'] == pytest.approx(np.mean(aucs))
        assert overall.loc['auc', 'std'] == pytest.approx(np.std(aucs, ddof=1))

    def test_single_repeat_has_zero_std(self, small_graph):
        summary = evaluate_model(small_graph, 'rescal', H, CFG, repeats=1)

        assert summary.overall_frame()['std'].tolist() == [0.0] * 4

    def test_threads_do_not_change_results(self, small_graph):
        serial = evaluate_model(small_graph, ModelKind.QUAD_REG, H, CFG, repeats=2, threads=1)
        parallel = evaluate_model(small_graph, ModelKind.QUAD_REG, H, CFG, repeats=2, threads=2)

        assert [r.overall() for r in serial.reports] == [r.overall() for r in parallel.reports]

    def test_metrics_in_range(self, small_graph):
        summary = evaluate_model(small_graph, ModelKind.LINEAR_REG, H, CFG, repeats=1, encoding='agency')

        report = summary.reports[0]
        assert 0.0 <= report.auc <= 1.0
        assert 0.0 <= report.f1_micro <= 1.0
        assert len(report.per_relation) == small_graph.n_relations

    def test_invalid_repeats(self, small_graph):
        with pytest.raises(ConfigError):
            evaluate_model(small_graph, ModelKind.RESCAL, H, CFG, repeats=0)

    def test_factor_dimensions_must_match(self, small_graph):
        factors = init_factors(ModelKind.RESCAL, small_graph.n_entities + 1, small_graph.n_relations, H, 0)

        with pytest.raises(DatasetError):
            evaluate_model(small_graph, ModelKind.RESCAL, H, CFG, repeats=1, factors=factors)


def test_export_report(small_graph, tmp_path):
    summary = evaluate_model(small_graph, ModelKind.RESCAL, H, CFG, repeats=2)

    paths = export_report(summary, tmp_path / 'report')

    overall = pd.read_csv(paths['overall'])
    assert overall.columns.tolist() == ['metric', 'mean', 'std']
    assert overall['metric'].tolist() == ['auc', 'f1_micro', 'f1_macro', 'threshold']
    per_relation = pd.read_csv(paths['per_relation'])
    assert sorted(per_relation['seed'].unique().tolist()) == [42, 43]
    assert len(per_relation) == 2 * small_graph.n_relations
    lines = paths['summary'].read_text(encoding='utf-8').splitlines()
    assert lines[:2] == ['model: rescal', 'repeats: 2']
    assert lines[2].startswith('auc: ')
    assert '+/-' in lines[2]


class TestDensitySweep:
    def test_rows_and_columns(self, small_graph):
        table = density_sweep(small_graph, [0.5, 1.0], [ModelKind.RESCAL, ModelKind.QUAD_REG], H, CFG)

        assert table.columns.tolist() == ['fraction', 'n_facts', 'graph_density', 'auc_rescal', 'auc_quad_reg']
        assert table['fraction'].tolist() == [0.5, 1.0]
        assert table['n_facts'].iloc[0] < table['n_facts'].iloc[1]
        assert table['n_facts'].iloc[1] == small_graph.n_triples

    def test_full_fraction_matches_single_evaluation(self, small_graph):
        table = density_sweep(small_graph, [1.0], 'rescal', H, CFG, seed=5)
        summary = evaluate_model(small_graph, 'rescal', H, CFG, repeats=1, seed=5)

        assert table['auc_rescal'].iloc[0] == pytest.approx(summary.reports[0].auc, abs=1e-12)

    @pytest.mark.parametrize('fraction', [0.0, 1.5])
    def test_invalid_fraction(self, small_graph, fraction):
        with pytest.raises(DatasetError):
            density_sweep(small_graph, [fraction], 'rescal', H, CFG)

    def test_csv(self, small_graph, tmp_path):
        table = density_sweep(small_graph, [1.0], 'rescal', H, CFG)

        path = density_to_csv(table, tmp_path / 'density.csv')

        assert pd.read_csv(path).columns.tolist() == table.columns.tolist()
