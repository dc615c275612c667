"""
Матрица сходства отношений C и ее лапласиан
"""
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import FrozenSet, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp
from loguru import logger

from ketra.exceptions import NumericalError, ShapeError
from ketra.ingestion.tensor import SparseTensor3

EIGEN_TOLERANCE = 1e-8


class Encoding(str, Enum):
    """Кодировки сходства по перекрытию субъектов и объектов"""

    SYMMETRIC = 'symmetric'
    AGENCY = 'agency'
    PATIENT = 'patient'
    TRANSITIVITY = 'transitivity'
    REVERSE_TRANSITIVITY = 'reverse_transitivity'


@dataclass(frozen=True)
class RelationProfile:
    """Множества субъектов S(X_k) и объектов O(X_k) среза"""

    subjects: FrozenSet[int]
    objects: FrozenSet[int]

    @property
    def is_empty(self) -> bool:
        return not self.subjects and not self.objects


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """
    Матрица сходства отношений N_r x N_r

    Attributes:
        c: Значения сходства в [0, 1]
        encoding: Кодировка, по которой посчитана матрица
        labels: Метки отношений (для экспорта)
    """

    c: np.ndarray
    encoding: Optional[Encoding] = None
    labels: Optional[List[str]] = None

    def __post_init__(self):
        c = np.array(self.c, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ShapeError(f"Similarity matrix must be square, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, 'c', c)

    @property
    def n_relations(self) -> int:
        return self.c.shape[0]

    def symmetric(self) -> np.ndarray:
        """(C + C^T) / 2"""
        return (self.c + self.c.T) / 2.0

    def laplacian(self) -> np.ndarray:
        """deg(C) - C для симметризованной матрицы"""
        c = self.symmetric()
        return np.diag(c.sum(axis=1)) - c

    @cached_property
    def laplacian_sqrt(self) -> np.ndarray:
        return laplacian_sqrt(self)


def _as_matrix(c: Union[SimilarityMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(c, SimilarityMatrix):
        return c.c
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ShapeError(f"Similarity matrix must be square, got shape {c.shape}")
    return c


def relation_profile(t: SparseTensor3, k: int) -> RelationProfile:
    """
    Субъекты и объекты отношения k

    Args:
        t: Тензор
        k: Индекс отношения

    Returns:
        RelationProfile
    """
    if not 0 <= k < t.n_relations:
        raise IndexError(f"Relation index {k} out of range [0, {t.n_relations})")

    pairs = t.slice_coords(k)
    return RelationProfile(
        subjects=frozenset(pairs[:, 0].tolist()),
        objects=frozenset(pairs[:, 1].tolist())
    )


def _incidence(t: SparseTensor3, column: int) -> sp.csr_matrix:
    """Бинарная матрица инцидентности N_r x N_e для субъектов (0) или объектов (1)"""
    rows = t.coords[:, 2]
    cols = t.coords[:, column]
    data = np.ones(len(rows), dtype=np.int64)
    m = sp.csr_matrix((data, (rows, cols)), shape=(t.n_relations, t.n_entities))
    # повторы суммируются, нужна индикаторная матрица
    m.data[:] = 1
    return m


def compute_similarity(
    t: SparseTensor3,
    encoding: Union[Encoding, str] = Encoding.TRANSITIVITY,
    labels: Optional[Sequence[str]] = None
) -> SimilarityMatrix:
    """
    Матрица сходства Жаккара между срезами тензора

    Для пары отношений (i, j) берутся левое множество отношения i и правое
    множество отношения j согласно кодировке; при пустом объединении C_ij = 0.

    Args:
        t: Тензор
        encoding: Кодировка сходства
        labels: Метки отношений

    Returns:
        SimilarityMatrix
    """
    encoding = Encoding(encoding)

    subjects = _incidence(t, 0)
    objects = _incidence(t, 1)

    if encoding == Encoding.SYMMETRIC:
        both = subjects + objects
        both.data[:] = 1
        left, right = both, both
    elif encoding == Encoding.AGENCY:
        left, right = subjects, subjects
    elif encoding == Encoding.PATIENT:
        left, right = objects, objects
    elif encoding == Encoding.TRANSITIVITY:
        left, right = subjects, objects
    else:
        left, right = objects, subjects

    intersection = np.asarray((left @ right.T).todense(), dtype=np.float64)
    left_size = np.asarray(left.sum(axis=1), dtype=np.float64).reshape(-1, 1)
    right_size = np.asarray(right.sum(axis=1), dtype=np.float64).reshape(1, -1)
    union = left_size + right_size - intersection

    c = np.divide(intersection, union, out=np.zeros_like(intersection), where=union > 0)

    logger.info(f"Similarity computed: encoding={encoding.value}, relations={t.n_relations}")
    return SimilarityMatrix(c=c, encoding=encoding, labels=list(labels) if labels is not None else None)


def laplacian_sqrt(c: Union[SimilarityMatrix, np.ndarray]) -> np.ndarray:
    """
    Квадратный корень лапласиана S = (deg(C) - C)^{1/2}

    Несимметричные матрицы предварительно симметризуются как (C + C^T)/2.
    Отрицательные собственные значения выше -1e-8 обнуляются.

    Args:
        c: Матрица сходства

    Returns:
        Симметричная PSD матрица S

    Raises:
        NumericalError: собственное значение меньше -1e-8
    """
    matrix = _as_matrix(c)
    sym = (matrix + matrix.T) / 2.0
    laplacian = np.diag(sym.sum(axis=1)) - sym

    eigenvalues, eigenvectors = np.linalg.eigh(laplacian)
    if eigenvalues.size and eigenvalues.min() < -EIGEN_TOLERANCE:
        raise NumericalError(
            f"Laplacian is not positive semi-definite: min eigenvalue {eigenvalues.min():.3e}"
        )

    root = np.sqrt(np.clip(eigenvalues, 0.0, None))
    s = (eigenvectors * root) @ eigenvectors.T
    return (s + s.T) / 2.0


def pairwise_slice_distances(r: np.ndarray) -> np.ndarray:
    """
    Матрица D_ij = ||R_i - R_j||_F^2 для стека срезов (N_r, p, q)

    Считается через матрицу Грама, без материализации попарных разностей.
    """
    flat = np.asarray(r, dtype=np.float64).reshape(r.shape[0], -1)
    gram = flat @ flat.T
    norms = np.diag(gram)
    distances = norms[:, None] + norms[None, :] - 2.0 * gram
    np.fill_diagonal(distances, 0.0)
    return np.clip(distances, 0.0, None)


def weighted_slice_distance(
    r: np.ndarray,
    c: Union[SimilarityMatrix, np.ndarray],
    method: str = 'pairwise'
) -> float:
    """
    Взвешенная сумма sum_ij C_ij ||R_i - R_j||_F^2

    Метод 'laplacian' считает ту же величину как 2 * ||R x_3 S||_F^2,
    где S - корень лапласиана симметризованной C.

    Args:
        r: Стек срезов (N_r, p, q)
        c: Матрица сходства N_r x N_r
        method: 'pairwise' или 'laplacian'

    Returns:
        Значение взвешенного расстояния
    """
    r = np.asarray(r, dtype=np.float64)
    matrix = _as_matrix(c)

    if r.ndim != 3:
        raise ShapeError(f"Slice stack must be 3-dimensional, got shape {r.shape}")
    if matrix.shape[0] != r.shape[0]:
        raise ShapeError(
            f"Similarity matrix {matrix.shape} does not match {r.shape[0]} slices"
        )

    if method == 'pairwise':
        return float(np.sum(matrix * pairwise_slice_distances(r)))

    if method == 'laplacian':
        s = laplacian_sqrt(matrix)
        # mode-3 произведение: Y_k = sum_i S_ki R_i
        y = np.tensordot(s, r, axes=(1, 0))
        return float(2.0 * np.sum(y * y))

    raise ValueError(f"Unknown method: {method}")


def similarity_to_csv(sim: SimilarityMatrix, path: Union[str, Path], labels: Optional[Sequence[str]] = None) -> None:
    """
    Экспорт C в CSV: заголовок с метками отношений, далее метка + N_r значений

    Args:
        sim: Матрица сходства
        path: Выходной файл
        labels: Метки отношений (по умолчанию sim.labels или индексы)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    labels = list(labels if labels is not None else (sim.labels or range(sim.n_relations)))
    labels = [str(label) for label in labels]
    if len(labels) != sim.n_relations:
        raise ShapeError(f"{len(labels)} labels for {sim.n_relations} relations")

    frame = pd.DataFrame(sim.c, index=labels, columns=labels)
    frame.to_csv(path, float_format='%.6f')
    logger.info(f"Similarity matrix exported: {path}")


def similarity_from_csv(path: Union[str, Path]) -> SimilarityMatrix:
    """Загрузка матрицы, записанной similarity_to_csv"""
    frame = pd.read_csv(path, index_col=0)
    return SimilarityMatrix(
        c=frame.to_numpy(dtype=np.float64),
        labels=[str(label) for label in frame.columns]
    )
