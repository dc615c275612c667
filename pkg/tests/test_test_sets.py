"""
Тесты построения размеченных наборов
"""
import numpy as np
import pytest

from ketra.evaluation import (
    LabeledTriples,
    Provenance,
    corrupt_objects,
    load_labeled_triples,
    load_positive_triples,
    make_test_set,
    make_validation_set,
    save_labeled_triples,
    stratified_weighted_test_set,
)
from ketra.exceptions import ConfigError, DatasetError, TripleParseError
from ketra.ingestion import KnowledgeGraph, ingest_triples


def as_set(triples):
    return set(map(tuple, np.asarray(triples).tolist()))


class TestStratifiedUniform:
    def test_per_slice_split(self, small_graph):
        test, masked = make_test_set(small_graph, per_slice=10, seed=1)

        assert len(test) == 30
        assert test.positive_fraction == pytest.approx(0.6)
        for k in range(3):
            in_slice = test.relations == k
            assert int(test.labels[in_slice].sum()) == 6
            assert int((test.labels[in_slice] == 0).sum()) == 4

    def test_positives_are_masked(self, small_graph):
        test, masked = make_test_set(small_graph, per_slice=10, seed=1)

        positives = as_set(test.positives)
        assert positives <= small_graph.triple_set()
        assert not positives & masked.triple_set()
        assert masked.triple_set() | positives == small_graph.triple_set()
        assert masked.entities == small_graph.entities

    def test_negatives_are_object_corruptions(self, small_graph):
        test, _ = make_test_set(small_graph, per_slice=10, seed=1)

        negatives = as_set(test.negatives)
        assert not negatives & small_graph.triple_set()
        seeds = {(s, r) for s, r, _ in as_set(test.positives)}
        assert all((s, r) in seeds for s, r, _ in negatives)

    def test_deterministic(self, small_graph):
        a, _ = make_test_set(small_graph, per_slice=10, seed=5)
        b, _ = make_test_set(small_graph, per_slice=10, seed=5)
        c, _ = make_test_set(small_graph, per_slice=10, seed=6)

        np.testing.assert_array_equal(a.triples, b.triples)
        assert as_set(a.triples) != as_set(c.triples)

    def test_capped_slice(self):
        kg = KnowledgeGraph(
            entities={f"e{i}": i for i in range(10)},
            relations={'big': 0, 'small': 1},
            triples=np.array([(i, 0, (i + 1) % 10) for i in range(10)] + [(0, 1, 5), (1, 1, 6)])
        )

        test, _ = make_test_set(kg, per_slice=10, seed=0)

        small = test.relations == 1
        assert int(test.labels[small].sum()) == 2
        assert int((test.labels[small] == 0).sum()) == 1

    def test_empty_graph(self):
        kg = KnowledgeGraph(entities={'a': 0}, relations={'r': 0}, triples=np.zeros((0, 3)))

        with pytest.raises(DatasetError):
            make_test_set(kg, per_slice=10, seed=0)

    def test_invalid_arguments(self, small_graph):
        with pytest.raises(ConfigError):
            make_test_set(small_graph, per_slice=0, seed=0)
        with pytest.raises(ConfigError):
            make_test_set(small_graph, mode='stratified_weighted', seed=0)


class TestValidationSet:
    def test_carved_from_training_graph(self, small_graph):
        test, masked = make_test_set(small_graph, per_slice=10, seed=2)
        known = small_graph.triple_set()

        validation, train = make_validation_set(masked, 10, seed=2, known=known)

        assert as_set(validation.positives) <= masked.triple_set()
        assert not as_set(validation.positives) & as_set(test.positives)
        assert not as_set(validation.negatives) & known
        assert train.n_triples == masked.n_triples - len(validation.positives)
        assert validation.has_both_classes


class TestCorruptObjects:
    def test_requested_count(self, small_graph):
        positives = small_graph.triples[:5]

        negatives = corrupt_objects(small_graph, positives, 12, seed=0)

        assert negatives.shape == (12, 3)
        assert len(as_set(negatives)) == 12
        assert not as_set(negatives) & small_graph.triple_set()

    def test_exhausted_candidates_are_skipped(self):
        kg = KnowledgeGraph(
            entities={'a': 0, 'b': 1},
            relations={'r': 0},
            triples=np.array([(0, 0, 0), (0, 0, 1)])
        )

        negatives = corrupt_objects(kg, kg.triples, 3, seed=0)

        assert negatives.shape == (0, 3)

    def test_forbidden_triples_avoided(self, small_graph):
        positives = small_graph.triples[:1]
        s, r, _ = positives[0]
        forbidden = {(int(s), int(r), o) for o in range(0, 30, 2)}

        negatives = corrupt_objects(small_graph, positives, 5, seed=0, forbidden=forbidden)

        assert not as_set(negatives) & forbidden

    def test_invalid_count(self, small_graph):
        with pytest.raises(DatasetError):
            corrupt_objects(small_graph, small_graph.triples[:1], 0, seed=0)


class TestStratifiedWeighted:
    def test_keeps_all_positives(self, small_graph):
        positives = small_graph.triples[:6]

        test, masked = stratified_weighted_test_set(small_graph, positives, seed=0)

        assert int(test.labels.sum()) == 6
        assert len(test.negatives) == 4
        assert test.provenance == Provenance.STRATIFIED_WEIGHTED
        assert masked.n_triples == small_graph.n_triples - 6

    def test_exact_variant(self, small_graph):
        positives = small_graph.triples[:10]

        test, masked = stratified_weighted_test_set(small_graph, positives, seed=0, exact=True)

        assert int(test.labels.sum()) == 6
        assert len(test.negatives) == 4
        assert test.positive_fraction == pytest.approx(0.6)
        assert masked.n_triples == small_graph.n_triples - 6

    def test_no_positives(self, small_graph):
        with pytest.raises(DatasetError):
            stratified_weighted_test_set(small_graph, np.zeros((0, 3)), seed=0)


class TestLabeledFiles:
    def test_load_labeled(self, family_file, tmp_path):
        kg = ingest_triples(family_file)
        path = tmp_path / 'test.tsv'
        path.write_text(
            'alice\tparent_of\tbob\t1\n'
            'bob\tparent_of\talice\t0\n'
            'bob\tparent_of\talice\t0\n',
            encoding='utf-8'
        )

        test = load_labeled_triples(path, kg)

        assert len(test) == 2
        assert test.labels.tolist() == [1, 0]
        assert test.provenance == Provenance.EXTERNAL_FILE

    @pytest.mark.parametrize('content,error', [
        ('alice\tparent_of\tbob\tyes\n', TripleParseError),
        ('alice\tparent_of\tbob\n', TripleParseError),
        ('alice\tparent_of\tzed\t1\n', DatasetError),
        ('', DatasetError),
    ])
    def test_invalid_labeled_files(self, family_file, tmp_path, content, error):
        kg = ingest_triples(family_file)
        path = tmp_path / 'bad.tsv'
        path.write_text(content, encoding='utf-8')

        with pytest.raises(error):
            load_labeled_triples(path, kg)

    def test_load_positive_triples(self, family_file, tmp_path):
        kg = ingest_triples(family_file)
        path = tmp_path / 'pos.tsv'
        path.write_text('alice\tparent_of\tbob\nbob\tchild_of\talice\t1\ndave\tparent_of\talice\t0\n', encoding='utf-8')

        positives = load_positive_triples(path, kg)

        assert positives.tolist() == [[0, 0, 1], [1, 3, 0]]

    def test_save_then_load(self, small_graph, tmp_path):
        test, _ = make_test_set(small_graph, per_slice=5, seed=3)

        path = save_labeled_triples(test, tmp_path / 'test.tsv', small_graph)
        loaded = load_labeled_triples(path, small_graph)

        np.testing.assert_array_equal(loaded.triples, test.triples)
        np.testing.assert_array_equal(loaded.labels, test.labels)

    def test_duplicates_rejected(self):
        with pytest.raises(DatasetError):
            LabeledTriples(triples=np.array([(0, 0, 1), (0, 0, 1)]), labels=np.array([1, 0]),
                           provenance=Provenance.EXTERNAL_FILE)
