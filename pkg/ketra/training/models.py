"""
Модели факторизации: наборы факторов, скоринг и целевая функция
"""
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from ketra.exceptions import ConfigError, NumericalError, ShapeError
from ketra.ingestion.tensor import SparseTensor3
from ketra.seeding import STREAM_INIT, spawn_rng
from ketra.similarity import SimilarityMatrix, pairwise_slice_distances


class FactorKind(str, Enum):
    """Квадратичная модель (одна A) или линейная (A1, A2)"""

    QUADRATIC = 'quadratic'
    LINEAR = 'linear'


class ModelKind(str, Enum):
    """Поддерживаемые модели"""

    RESCAL = 'rescal'
    NN_RESCAL = 'nn_rescal'
    QUAD_REG = 'quad_reg'
    QUAD_CONSTRAINT = 'quad_constraint'
    LINEAR_REG = 'linear_reg'
    LINEAR_CONSTRAINT = 'linear_constraint'

    @property
    def factor_kind(self) -> FactorKind:
        return FactorKind.LINEAR if self.is_linear else FactorKind.QUADRATIC

    @property
    def is_linear(self) -> bool:
        return self in (ModelKind.LINEAR_REG, ModelKind.LINEAR_CONSTRAINT)

    @property
    def is_constrained(self) -> bool:
        return self in (ModelKind.QUAD_CONSTRAINT, ModelKind.LINEAR_CONSTRAINT)

    @property
    def is_regularized(self) -> bool:
        return self in (ModelKind.QUAD_REG, ModelKind.LINEAR_REG)

    @property
    def uses_similarity(self) -> bool:
        return self.is_constrained or self.is_regularized

    @property
    def nonnegative(self) -> bool:
        return self == ModelKind.NN_RESCAL

    @property
    def multiplier_sign(self) -> int:
        """
        Знак суммы множителей в шаге по срезам R_k

        quad_constraint прибавляет sum_j lambda_kj к диагонали и правой части,
        linear_constraint вычитает. Для моделей без ограничений 0.
        """
        if self == ModelKind.QUAD_CONSTRAINT:
            return 1
        if self == ModelKind.LINEAR_CONSTRAINT:
            return -1
        return 0


class CouplingMode(str, Enum):
    """
    Коэффициенты замкнутых обновлений

    derived - точные условия стационарности целевой функции,
    literal - коэффициенты в исходной печатной форме правил.
    """

    DERIVED = 'derived'
    LITERAL = 'literal'


class Hyperparams(BaseModel):
    """Гиперпараметры моделей"""

    model_config = ConfigDict(frozen=True, extra='forbid')

    rank: Optional[int] = Field(default=None, ge=1, description="Ранг p; по умолчанию N_r")
    lambda_A: float = Field(default=0.1, ge=0)
    lambda_r: float = Field(default=0.1, ge=0)
    lambda_e: float = Field(default=1.0, ge=0)
    lambda_s: float = Field(default=0.1, ge=0)
    lambda_a1: Optional[float] = Field(default=None, ge=0)
    lambda_a2: Optional[float] = Field(default=None, ge=0)
    rho: float = Field(default=1.0, gt=0, description="inf отключает проксимальный член")
    lagrange_step: float = Field(default=1.0, gt=0, le=1)

    @property
    def rho_inv(self) -> float:
        return 0.0 if math.isinf(self.rho) else 1.0 / self.rho

    @property
    def a1(self) -> float:
        return self.lambda_A if self.lambda_a1 is None else self.lambda_a1

    @property
    def a2(self) -> float:
        return self.lambda_A if self.lambda_a2 is None else self.lambda_a2

    def resolved_rank(self, n_relations: int) -> int:
        return self.rank if self.rank is not None else int(n_relations)

    def as_params(self) -> Dict[str, str]:
        """Плоский словарь для манифеста и трекинга"""
        return {name: str(value) for name, value in self.model_dump().items()}


@dataclass(frozen=True, eq=False)
class FactorSet:
    """
    Набор факторов модели

    Квадратичные модели хранят A, линейные A1 и A2. Срезы R имеют форму
    (N_r, p, p). Множители Лагранжа есть только у моделей с ограничениями.
    """

    model: ModelKind
    r: np.ndarray
    a: Optional[np.ndarray] = None
    a1: Optional[np.ndarray] = None
    a2: Optional[np.ndarray] = None
    multipliers: Optional[np.ndarray] = None

    def __post_init__(self):
        model = ModelKind(self.model)
        object.__setattr__(self, 'model', model)

        r = self._frozen(self.r)
        if r.ndim != 3 or r.shape[1] != r.shape[2]:
            raise ShapeError(f"Relation factors must have shape (N_r, p, p), got {r.shape}")
        object.__setattr__(self, 'r', r)
        p = r.shape[1]

        names = ('a1', 'a2') if model.is_linear else ('a',)
        for name in ('a', 'a1', 'a2'):
            value = getattr(self, name)
            if name not in names:
                if value is not None:
                    raise ShapeError(f"Factor {name} is not used by model {model.value}")
                continue
            if value is None:
                raise ShapeError(f"Model {model.value} requires factor {name}")
            value = self._frozen(value)
            if value.ndim != 2 or value.shape[1] != p:
                raise ShapeError(f"Factor {name} must have shape (N_e, {p}), got {value.shape}")
            object.__setattr__(self, name, value)

        if model.is_linear and self.a1.shape != self.a2.shape:
            raise ShapeError(f"A1 {self.a1.shape} and A2 {self.a2.shape} differ")

        if model.is_constrained:
            if self.multipliers is None:
                raise ShapeError(f"Model {model.value} requires Lagrange multipliers")
            multipliers = self._frozen(self.multipliers)
            if multipliers.shape != (r.shape[0], r.shape[0]):
                raise ShapeError(f"Multipliers must have shape {(r.shape[0], r.shape[0])}, got {multipliers.shape}")
            object.__setattr__(self, 'multipliers', multipliers)
        elif self.multipliers is not None:
            raise ShapeError(f"Model {model.value} carries no Lagrange multipliers")

    @staticmethod
    def _frozen(array: np.ndarray) -> np.ndarray:
        array = np.array(array, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise NumericalError("Factor matrices must be finite")
        array.setflags(write=False)
        return array

    @property
    def kind(self) -> FactorKind:
        return self.model.factor_kind

    @property
    def n_entities(self) -> int:
        return self.entity_factors()[0].shape[0]

    @property
    def n_relations(self) -> int:
        return self.r.shape[0]

    @property
    def rank(self) -> int:
        return self.r.shape[1]

    def entity_factors(self) -> Tuple[np.ndarray, np.ndarray]:
        """Левый и правый факторы сущностей: (A, A) или (A1, A2)"""
        if self.kind == FactorKind.QUADRATIC:
            return self.a, self.a
        return self.a1, self.a2

    def unknowns(self) -> np.ndarray:
        """Плоский вектор неизвестных: A (или A1, затем A2), затем R_0 ... R_{N_r-1}"""
        blocks = [self.a] if self.kind == FactorKind.QUADRATIC else [self.a1, self.a2]
        return np.concatenate([b.ravel() for b in blocks] + [self.r.ravel()])

    def matrices(self) -> Dict[str, np.ndarray]:
        """Именованные матрицы для экспорта"""
        result = {'A': self.a} if self.kind == FactorKind.QUADRATIC else {'A1': self.a1, 'A2': self.a2}
        for k in range(self.n_relations):
            result[f'R_{k}'] = self.r[k]
        if self.multipliers is not None:
            result['multipliers'] = self.multipliers
        return result

    def evolve(self, **changes) -> 'FactorSet':
        return replace(self, **changes)


def init_factors(
    kind: Union[ModelKind, str],
    n_entities: int,
    n_relations: int,
    h: Hyperparams,
    seed: int
) -> FactorSet:
    """
    Случайная инициализация: U[0, 1) / sqrt(p), множители равны нулю

    Args:
        kind: Модель
        n_entities: N_e
        n_relations: N_r
        h: Гиперпараметры (ранг)
        seed: Корневой сид

    Returns:
        FactorSet
    """
    kind = ModelKind(kind)
    if n_entities < 1 or n_relations < 1:
        raise ShapeError(f"Dimensions must be positive, got N_e={n_entities}, N_r={n_relations}")

    p = h.resolved_rank(n_relations)
    scale = 1.0 / math.sqrt(p)
    rng = spawn_rng(seed, STREAM_INIT)

    if kind.is_linear:
        entity = {
            'a1': rng.random((n_entities, p)) * scale,
            'a2': rng.random((n_entities, p)) * scale
        }
    else:
        entity = {'a': rng.random((n_entities, p)) * scale}
    r = rng.random((n_relations, p, p)) * scale

    multipliers = np.zeros((n_relations, n_relations)) if kind.is_constrained else None

    logger.debug(f"Factors initialized: model={kind.value}, N_e={n_entities}, N_r={n_relations}, p={p}")
    return FactorSet(model=kind, r=r, multipliers=multipliers, **entity)


def score_triple(f: FactorSet, s: int, r: int, o: int) -> float:
    """Оценка тройки: a_s^T R_r a_o (или A1[s]^T R_r A2[o])"""
    left, right = f.entity_factors()
    if not (0 <= s < f.n_entities and 0 <= o < f.n_entities):
        raise IndexError(f"Entity index out of range [0, {f.n_entities}): s={s}, o={o}")
    if not 0 <= r < f.n_relations:
        raise IndexError(f"Relation index {r} out of range [0, {f.n_relations})")
    return float(left[s] @ f.r[r] @ right[o])


def score_triples(f: FactorSet, s: np.ndarray, r: np.ndarray, o: np.ndarray) -> np.ndarray:
    """
    Векторизованная оценка массива троек

    Тройки группируются по отношению, чтобы не строить тензор n x p x p.

    Args:
        f: Набор факторов
        s, r, o: Массивы индексов одинаковой длины

    Returns:
        Массив оценок
    """
    s = np.asarray(s, dtype=np.int64)
    r = np.asarray(r, dtype=np.int64)
    o = np.asarray(o, dtype=np.int64)
    if not (s.shape == r.shape == o.shape):
        raise ShapeError(f"Index arrays differ in shape: {s.shape}, {r.shape}, {o.shape}")

    if s.size:
        if min(s.min(), o.min()) < 0 or max(s.max(), o.max()) >= f.n_entities:
            raise IndexError(f"Entity index out of range [0, {f.n_entities})")
        if r.min() < 0 or r.max() >= f.n_relations:
            raise IndexError(f"Relation index out of range [0, {f.n_relations})")

    left, right = f.entity_factors()
    scores = np.zeros(s.shape, dtype=np.float64)
    for k in np.unique(r):
        mask = r == k
        scores[mask] = np.sum((left[s[mask]] @ f.r[k]) * right[o[mask]], axis=1)
    return scores


MERGED_KIND = {
    ModelKind.LINEAR_REG: ModelKind.QUAD_REG,
    ModelKind.LINEAR_CONSTRAINT: ModelKind.QUAD_CONSTRAINT
}


def merge_entity_factors(f: FactorSet) -> FactorSet:
    """
    Слияние линейной модели в квадратичную: A = (A1 + A2) / 2, R без изменений

    Raises:
        ConfigError: набор факторов уже квадратичный
    """
    if not f.model.is_linear:
        raise ConfigError(f"Only linear factor sets can be merged, got {f.model.value}")
    return FactorSet(
        model=MERGED_KIND[f.model],
        a=(f.a1 + f.a2) / 2.0,
        r=f.r,
        multipliers=f.multipliers
    )


def similarity_array(
    kind: ModelKind,
    c: Optional[Union[SimilarityMatrix, np.ndarray]],
    n_relations: int
) -> Optional[np.ndarray]:
    """
    Проверка матрицы сходства для модели

    Raises:
        ConfigError: модель использует сходство, а C не передана
        ShapeError: размер C не совпадает с N_r
    """
    if c is None:
        if kind.uses_similarity:
            raise ConfigError(f"Model {kind.value} requires a relation similarity matrix")
        return None

    matrix = c.c if isinstance(c, SimilarityMatrix) else np.asarray(c, dtype=np.float64)
    if matrix.shape != (n_relations, n_relations):
        raise ShapeError(f"Similarity matrix {matrix.shape} does not match {n_relations} relations")
    return matrix


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Слагаемые целевой функции"""

    f: float
    g: float
    f_s: float = 0.0
    f_rho: float = 0.0
    f_lag: float = 0.0

    @property
    def total(self) -> float:
        return self.f + self.g + self.f_s + self.f_rho + self.f_lag

    def as_dict(self) -> Dict[str, float]:
        return {
            'objective': self.total,
            'f': self.f,
            'g': self.g,
            'f_s': self.f_s,
            'f_rho': self.f_rho,
            'f_lag': self.f_lag
        }


def reconstruction_loss(f: FactorSet, x: SparseTensor3) -> float:
    """
    1/2 sum_k ||X_k - L R_k M^T||_F^2 без построения плотных срезов

    ||X||^2 = nnz, <X_k, L R_k M^T> суммируется по ненулевым элементам,
    ||L R_k M^T||^2 = tr(R_k^T G_L R_k G_M).
    """
    left, right = f.entity_factors()
    g_left = left.T @ left
    g_right = right.T @ right

    model_norm = float(np.sum(f.r * (g_left @ f.r @ g_right)))

    s, o, k = x.coords[:, 0], x.coords[:, 1], x.coords[:, 2]
    inner = 0.0
    for rel in np.unique(k):
        mask = k == rel
        inner += float(np.sum((left[s[mask]] @ f.r[rel]) * right[o[mask]]))

    return 0.5 * (x.squared_norm() - 2.0 * inner + model_norm)


def objective_value(
    kind: Union[ModelKind, str],
    f: FactorSet,
    x: SparseTensor3,
    c: Optional[Union[SimilarityMatrix, np.ndarray]],
    h: Hyperparams
) -> ObjectiveBreakdown:
    """
    Значение целевой функции модели по слагаемым

    Args:
        kind: Модель, чья целевая функция считается
        f: Набор факторов
        x: Тензор
        c: Матрица сходства (обязательна для моделей со сходством)
        h: Гиперпараметры

    Returns:
        ObjectiveBreakdown (f, g, f_s, f_rho, f_lag)

    Raises:
        ShapeError: несогласованные размеры
    """
    kind = ModelKind(kind)
    if kind.factor_kind != f.kind:
        raise ShapeError(f"Model {kind.value} cannot evaluate {f.kind.value} factors")
    if x.n_entities != f.n_entities or x.n_relations != f.n_relations:
        raise ShapeError(
            f"Tensor {x.shape} does not match factors (N_e={f.n_entities}, N_r={f.n_relations})"
        )
    c = similarity_array(kind, c, f.n_relations)

    r_norm = float(np.sum(f.r * f.r))
    fit_term = reconstruction_loss(f, x)

    if kind.is_linear:
        a1_norm = float(np.sum(f.a1 * f.a1))
        a2_norm = float(np.sum(f.a2 * f.a2))
        tie = float(np.sum((f.a1 - f.a2) ** 2))
        if kind == ModelKind.LINEAR_REG:
            g = 0.5 * h.lambda_A * (a1_norm + a2_norm)
        else:
            g = 0.5 * h.a1 * a1_norm + 0.5 * h.a2 * a2_norm
        g += 0.5 * h.lambda_e * tie + 0.5 * h.lambda_r * r_norm
    else:
        g = 0.5 * h.lambda_A * float(np.sum(f.a * f.a)) + 0.5 * h.lambda_r * r_norm

    f_s = f_rho = f_lag = 0.0
    if kind.uses_similarity:
        distances = pairwise_slice_distances(f.r)
        if kind.is_regularized:
            f_s = 0.5 * h.lambda_s * float(np.sum(c * distances))
        if kind.is_constrained and f.multipliers is not None:
            multipliers = f.multipliers.copy()
            np.fill_diagonal(multipliers, 0.0)
            if kind == ModelKind.QUAD_CONSTRAINT:
                violation = distances + c - 1.0
            else:
                violation = 1.0 - distances + c
            f_lag = float(np.sum(multipliers * violation))

    if kind == ModelKind.LINEAR_REG:
        f_rho = h.rho_inv * (a1_norm + a2_norm + r_norm)

    return ObjectiveBreakdown(f=fit_term, g=g, f_s=f_s, f_rho=f_rho, f_lag=f_lag)
