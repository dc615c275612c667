"""
Общие фикстуры тестов
"""
import itertools
from pathlib import Path

import numpy as np
import pytest

from ketra.ingestion import KnowledgeGraph, SparseTensor3, build_tensor

FAMILY_TRIPLES = [
    ('alice', 'parent_of', 'bob'),
    ('alice', 'parent_of', 'carol'),
    ('dave', 'parent_of', 'bob'),
    ('dave', 'parent_of', 'carol'),
    ('bob', 'sibling_of', 'carol'),
    ('carol', 'sibling_of', 'bob'),
    ('alice', 'married_to', 'dave'),
    ('dave', 'married_to', 'alice'),
    ('bob', 'child_of', 'alice'),
    ('carol', 'child_of', 'dave'),
]


def write_tsv(path: Path, triples) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(''.join('\t'.join(t) + '\n' for t in triples), encoding='utf-8')
    return path


def make_graph(n_entities: int, n_relations: int, density: float, seed: int) -> KnowledgeGraph:
    """Случайный граф с гарантированно непустыми срезами"""
    rng = np.random.default_rng(seed)
    triples = []
    for r in range(n_relations):
        pairs = [(s, o) for s, o in itertools.product(range(n_entities), repeat=2) if rng.random() < density]
        if len(pairs) < 8:
            pairs = [(i, (i + r + 1) % n_entities) for i in range(8)]
        triples.extend((s, r, o) for s, o in pairs)
    return KnowledgeGraph(
        entities={f"e{i}": i for i in range(n_entities)},
        relations={f"r{k}": k for k in range(n_relations)},
        triples=np.array(triples, dtype=np.int64)
    )


def random_tensor(rng: np.random.Generator, n_entities: int, n_relations: int, density: float = 0.3) -> SparseTensor3:
    dense = (rng.random((n_entities, n_entities, n_relations)) < density).astype(float)
    return SparseTensor3.from_dense(dense)


def random_similarity(rng: np.random.Generator, n_relations: int, symmetric: bool = True) -> np.ndarray:
    c = rng.random((n_relations, n_relations))
    if symmetric:
        c = (c + c.T) / 2.0
    return c


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def family_file(tmp_path):
    return write_tsv(tmp_path / 'family' / 'train.txt', FAMILY_TRIPLES)


@pytest.fixture
def family_dir(family_file):
    return family_file.parent


@pytest.fixture
def small_graph():
    # 30 сущностей, 3 отношения, около 90 фактов на отношение
    return make_graph(30, 3, 0.1, seed=7)


@pytest.fixture
def small_tensor(small_graph):
    return build_tensor(small_graph)


@pytest.fixture
def graph_dir(tmp_path, small_graph):
    labels = small_graph.entity_labels
    relations = small_graph.relation_labels
    triples = [(labels[s], relations[r], labels[o]) for s, r, o in small_graph.triples.tolist()]
    return write_tsv(tmp_path / 'graph' / 'train.txt', triples).parent
