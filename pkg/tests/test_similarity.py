"""
Тесты матрицы сходства и лапласиана
"""
import numpy as np
import pytest

from ketra.exceptions import NumericalError, ShapeError
from ketra.ingestion import SparseTensor3, build_tensor, ingest_triples
from ketra.similarity import (
    Encoding,
    SimilarityMatrix,
    compute_similarity,
    laplacian_sqrt,
    pairwise_slice_distances,
    relation_profile,
    similarity_from_csv,
    similarity_to_csv,
    weighted_slice_distance,
)
from tests.conftest import random_similarity, random_tensor


def jaccard(left, right):
    union = left | right
    return len(left & right) / len(union) if union else 0.0


def brute_force(t: SparseTensor3, encoding: Encoding) -> np.ndarray:
    profiles = [relation_profile(t, k) for k in range(t.n_relations)]
    pick = {
        Encoding.SYMMETRIC: (lambda p: p.subjects | p.objects, lambda p: p.subjects | p.objects),
        Encoding.AGENCY: (lambda p: p.subjects, lambda p: p.subjects),
        Encoding.PATIENT: (lambda p: p.objects, lambda p: p.objects),
        Encoding.TRANSITIVITY: (lambda p: p.subjects, lambda p: p.objects),
        Encoding.REVERSE_TRANSITIVITY: (lambda p: p.objects, lambda p: p.subjects),
    }[encoding]
    return np.array([[jaccard(pick[0](a), pick[1](b)) for b in profiles] for a in profiles])


class TestComputeSimilarity:
    @pytest.mark.parametrize('encoding', list(Encoding))
    def test_matches_set_enumeration(self, encoding):
        rng = np.random.default_rng(99)
        for _ in range(100):
            n_e = int(rng.integers(1, 9))
            n_r = int(rng.integers(1, 6))
            t = random_tensor(rng, n_e, n_r, density=float(rng.uniform(0.0, 0.6)))

            c = compute_similarity(t, encoding).c

            np.testing.assert_array_equal(c, brute_force(t, encoding))

    def test_transitivity_duality(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            t = random_tensor(rng, int(rng.integers(1, 9)), int(rng.integers(1, 6)))

            forward = compute_similarity(t, Encoding.TRANSITIVITY).c
            reverse = compute_similarity(t, Encoding.REVERSE_TRANSITIVITY).c

            np.testing.assert_array_equal(forward, reverse.T)

    @pytest.mark.parametrize('encoding', list(Encoding))
    def test_invariant_to_entity_permutation(self, encoding):
        rng = np.random.default_rng(17)
        for _ in range(30):
            n_e = int(rng.integers(2, 9))
            dense = random_tensor(rng, n_e, int(rng.integers(1, 6)), density=0.4).to_dense()
            perm = rng.permutation(n_e)
            permuted = SparseTensor3.from_dense(dense[np.ix_(perm, perm)])

            np.testing.assert_array_equal(
                compute_similarity(permuted, encoding).c,
                compute_similarity(SparseTensor3.from_dense(dense), encoding).c
            )

    @pytest.mark.parametrize('encoding', list(Encoding))
    def test_relation_permutation_permutes_matrix(self, encoding):
        rng = np.random.default_rng(18)
        for _ in range(30):
            n_r = int(rng.integers(2, 6))
            dense = random_tensor(rng, int(rng.integers(2, 9)), n_r, density=0.4).to_dense()
            perm = rng.permutation(n_r)

            c = compute_similarity(SparseTensor3.from_dense(dense), encoding).c
            permuted = compute_similarity(SparseTensor3.from_dense(dense[:, :, perm]), encoding).c

            np.testing.assert_array_equal(permuted, c[np.ix_(perm, perm)])

    @pytest.mark.parametrize('encoding', [Encoding.SYMMETRIC, Encoding.AGENCY, Encoding.PATIENT])
    def test_symmetric_encodings(self, small_tensor, encoding):
        c = compute_similarity(small_tensor, encoding).c

        np.testing.assert_array_equal(c, c.T)
        assert c.min() >= 0.0 and c.max() <= 1.0

    def test_family_values(self, family_file):
        t = build_tensor(ingest_triples(family_file))

        c = compute_similarity(t, Encoding.TRANSITIVITY).c

        # subjects(child_of) = {bob, carol} = objects(parent_of)
        assert c[3, 0] == 1.0
        # subjects(parent_of) = {alice, dave}, objects(child_of) = {alice, dave}
        assert c[0, 3] == 1.0
        assert c[1, 1] == 1.0
        assert c[0, 0] == 0.0

    def test_empty_slice_row_is_zero(self):
        dense = np.zeros((3, 3, 2))
        dense[0, 1, 0] = 1.0

        c = compute_similarity(SparseTensor3.from_dense(dense), Encoding.AGENCY).c

        np.testing.assert_array_equal(c, [[1.0, 0.0], [0.0, 0.0]])


class TestLaplacian:
    def test_square_root_squares_to_laplacian(self, rng):
        c = random_similarity(rng, 5)
        sim = SimilarityMatrix(c)

        s = laplacian_sqrt(sim)

        np.testing.assert_allclose(s @ s, sim.laplacian(), atol=1e-10)
        np.testing.assert_allclose(s, s.T)

    def test_non_symmetric_input_is_symmetrized(self, rng):
        c = random_similarity(rng, 4, symmetric=False)

        np.testing.assert_allclose(laplacian_sqrt(c), laplacian_sqrt((c + c.T) / 2.0))

    def test_negative_weights_rejected(self):
        c = np.array([[0.0, -1.0], [-1.0, 0.0]])

        with pytest.raises(NumericalError):
            laplacian_sqrt(c)

    def test_non_square_rejected(self):
        with pytest.raises(ShapeError):
            SimilarityMatrix(np.zeros((2, 3)))


class TestWeightedSliceDistance:
    def test_pairwise_and_laplacian_paths_agree(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            n_r = int(rng.integers(1, 6))
            p = int(rng.integers(1, 5))
            q = int(rng.integers(1, 5))
            r = rng.normal(size=(n_r, p, q))
            c = random_similarity(rng, n_r, symmetric=bool(rng.integers(0, 2)))

            pairwise = weighted_slice_distance(r, c, method='pairwise')
            laplacian = weighted_slice_distance(r, c, method='laplacian')

            assert laplacian == pytest.approx(pairwise, rel=1e-8, abs=1e-10)

    def test_pairwise_distances(self, rng):
        r = rng.normal(size=(3, 2, 2))

        d = pairwise_slice_distances(r)

        assert d[0, 2] == pytest.approx(np.sum((r[0] - r[2]) ** 2))
        np.testing.assert_array_equal(np.diag(d), 0.0)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            weighted_slice_distance(rng.normal(size=(3, 2, 2)), np.eye(2))

    def test_unknown_method(self, rng):
        with pytest.raises(ValueError):
            weighted_slice_distance(rng.normal(size=(2, 2, 2)), np.eye(2), method='cubic')


def test_csv_roundtrip(tmp_path, family_file):
    kg = ingest_triples(family_file)
    sim = compute_similarity(build_tensor(kg), Encoding.TRANSITIVITY)
    path = tmp_path / 'c.csv'

    similarity_to_csv(sim, path, kg.relation_labels)
    loaded = similarity_from_csv(path)

    assert loaded.labels == kg.relation_labels
    np.testing.assert_allclose(loaded.c, sim.c, atol=5e-7)
