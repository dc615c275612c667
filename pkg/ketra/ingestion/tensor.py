"""
Разреженный бинарный тензор N_e x N_e x N_r и статистика набора данных
"""
from dataclasses import dataclass
from functools import cached_property
from typing import List, Tuple

import numpy as np
import scipy.sparse as sp
from loguru import logger

from ketra.exceptions import DatasetError, ShapeError
from .ingestion_service import KnowledgeGraph


@dataclass(frozen=True, eq=False)
class SparseTensor3:
    """
    Бинарный тензор в координатном формате

    Фронтальный срез k - матрица смежности отношения k.
    Значение каждой записи неявно равно 1.
    """

    shape: Tuple[int, int, int]
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 3)
        n_e, n_e2, n_r = self.shape
        if n_e != n_e2:
            raise ShapeError(f"Tensor must be N_e x N_e x N_r, got {self.shape}")
        if coords.size and (
            coords.min() < 0
            or coords[:, :2].max() >= n_e
            or coords[:, 2].max() >= n_r
        ):
            raise ShapeError(f"Tensor coordinates out of bounds for shape {self.shape}")

        # запись бинарная, повторная координата не меняет значение
        _, first = np.unique(coords, axis=0, return_index=True)
        if first.size < coords.shape[0]:
            logger.warning(f"Dropped {coords.shape[0] - first.size} duplicate tensor coordinates")
            coords = coords[np.sort(first)]
        coords.setflags(write=False)
        object.__setattr__(self, 'shape', (int(n_e), int(n_e), int(n_r)))
        object.__setattr__(self, 'coords', coords)

    @property
    def n_entities(self) -> int:
        return self.shape[0]

    @property
    def n_relations(self) -> int:
        return self.shape[2]

    @property
    def nnz(self) -> int:
        return int(self.coords.shape[0])

    def entries(self) -> set:
        return set(map(tuple, self.coords.tolist()))

    @cached_property
    def _slices(self) -> List[sp.csr_matrix]:
        n = self.n_entities
        slices = []
        for k in range(self.n_relations):
            sel = self.coords[self.coords[:, 2] == k]
            data = np.ones(len(sel), dtype=np.float64)
            slices.append(sp.csr_matrix((data, (sel[:, 0], sel[:, 1])), shape=(n, n)))
        return slices

    def slice(self, k: int) -> sp.csr_matrix:
        """Фронтальный срез X_k в формате CSR"""
        if not 0 <= k < self.n_relations:
            raise IndexError(f"Relation index {k} out of range [0, {self.n_relations})")
        return self._slices[k]

    def slices(self) -> List[sp.csr_matrix]:
        return list(self._slices)

    def slice_coords(self, k: int) -> np.ndarray:
        """Пары (i, j) среза k"""
        if not 0 <= k < self.n_relations:
            raise IndexError(f"Relation index {k} out of range [0, {self.n_relations})")
        return self.coords[self.coords[:, 2] == k][:, :2]

    def squared_norm(self) -> float:
        # записи бинарные
        return float(self.nnz)

    def to_dense(self) -> np.ndarray:
        """Плотный массив (N_e, N_e, N_r); только для небольших тензоров"""
        dense = np.zeros(self.shape, dtype=np.float64)
        if self.nnz:
            dense[self.coords[:, 0], self.coords[:, 1], self.coords[:, 2]] = 1.0
        return dense

    @classmethod
    def from_dense(cls, array: np.ndarray) -> 'SparseTensor3':
        """Тензор из плотного 0-1 массива (N_e, N_e, N_r)"""
        array = np.asarray(array)
        if array.ndim != 3:
            raise ShapeError(f"Expected an order-3 array, got shape {array.shape}")
        coords = np.argwhere(array != 0)
        return cls(shape=array.shape, coords=coords)


@dataclass(frozen=True)
class DatasetStats:
    """Статистика набора данных"""

    n_entities: int
    n_relations: int
    n_facts: int
    avg_degree: float
    graph_density: float

    def as_dict(self) -> dict:
        return {
            'n_entities': self.n_entities,
            'n_relations': self.n_relations,
            'n_facts': self.n_facts,
            'avg_degree': self.avg_degree,
            'graph_density': self.graph_density
        }


def build_tensor(kg: KnowledgeGraph) -> SparseTensor3:
    """
    Построение бинарного тензора: (s, r, o) из графа -> X[s, o, r] = 1

    Args:
        kg: Граф знаний

    Returns:
        SparseTensor3 формы (N_e, N_e, N_r)
    """
    if kg.n_entities == 0 or kg.n_relations == 0:
        raise DatasetError("Cannot build a tensor from an empty knowledge graph")

    coords = kg.triples[:, [0, 2, 1]]
    tensor = SparseTensor3(shape=(kg.n_entities, kg.n_entities, kg.n_relations), coords=coords)

    logger.debug(f"Tensor built: shape={tensor.shape}, nnz={tensor.nnz}")
    return tensor


def stats(t: SparseTensor3) -> DatasetStats:
    """
    Число сущностей, отношений и фактов, средняя степень и плотность графа

    Args:
        t: Тензор набора данных

    Returns:
        DatasetStats
    """
    n_e = t.n_entities
    n_facts = t.nnz
    return DatasetStats(
        n_entities=n_e,
        n_relations=t.n_relations,
        n_facts=n_facts,
        avg_degree=n_facts / n_e,
        graph_density=n_facts / (n_e * n_e)
    )
