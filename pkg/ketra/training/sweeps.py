"""
Замкнутые блочные обновления (один проход ALS на модель)

Порядок проходов: факторы сущностей, затем срезы отношений, затем множители.
Каждый проход возвращает новый FactorSet; исходный не изменяется.
"""
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from loguru import logger

from ketra.exceptions import ConfigError, NumericalError, ShapeError
from ketra.ingestion.tensor import SparseTensor3
from ketra.similarity import SimilarityMatrix, pairwise_slice_distances
from .linalg import KronEigenSystem, solve_right
from .models import CouplingMode, FactorSet, Hyperparams, ModelKind, similarity_array

SimilarityInput = Optional[Union[SimilarityMatrix, np.ndarray]]


def _solve_entity(
    slices: Sequence[sp.spmatrix],
    other: np.ndarray,
    r: np.ndarray,
    diagonal: float,
    extra: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Y <- [sum_k X_k B R_k^T + extra][sum_k R_k B^T B R_k^T + diagonal I]^{-1}

    Правый фактор получается той же формулой с X_k^T и R_k^T.
    """
    p = r.shape[1]
    numerator = np.zeros((other.shape[0], p)) if extra is None else np.array(extra, dtype=np.float64)
    for k, x_k in enumerate(slices):
        numerator += x_k @ (other @ r[k].T)

    gram = other.T @ other
    denominator = np.sum(r @ gram @ r.transpose(0, 2, 1), axis=0) + diagonal * np.eye(p)
    return solve_right(numerator, denominator)


def update_entity_left(
    x: SparseTensor3,
    a2: np.ndarray,
    r: np.ndarray,
    diagonal: float,
    extra: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Обновление A1 при фиксированных A2 и R

    Args:
        x: Тензор
        a2: Правый фактор
        r: Срезы отношений
        diagonal: Суммарный диагональный коэффициент знаменателя
        extra: Добавка к числителю (например, lambda_e * A2)

    Returns:
        Новая матрица A1
    """
    return _solve_entity(x.slices(), a2, r, diagonal, extra)


def update_entity_right(
    x: SparseTensor3,
    a1: np.ndarray,
    r: np.ndarray,
    diagonal: float,
    extra: Optional[np.ndarray] = None
) -> np.ndarray:
    """Обновление A2 при фиксированных A1 и R (зеркальное правило)"""
    transposed = [x_k.T for x_k in x.slices()]
    return _solve_entity(transposed, a1, r.transpose(0, 2, 1), diagonal, extra)


def update_entity_quadratic(x: SparseTensor3, a: np.ndarray, r: np.ndarray, lambda_a: float) -> np.ndarray:
    """
    Правило RESCAL для общей матрицы сущностей

    A <- [sum_k X_k A R_k^T + X_k^T A R_k][sum_k R_k A^T A R_k^T + R_k^T A^T A R_k + lambda_A I]^{-1}
    """
    p = r.shape[1]
    numerator = np.zeros_like(a)
    for k, x_k in enumerate(x.slices()):
        numerator += x_k @ (a @ r[k].T) + x_k.T @ (a @ r[k])

    gram = a.T @ a
    r_t = r.transpose(0, 2, 1)
    denominator = np.sum(r @ gram @ r_t + r_t @ gram @ r, axis=0) + lambda_a * np.eye(p)
    return solve_right(numerator, denominator)


def projected_slices(x: SparseTensor3, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """B_k = L^T X_k M для всех срезов, форма (N_r, p, p)"""
    return np.stack([left.T @ (x_k @ right) for x_k in x.slices()])


def update_relations(
    x: SparseTensor3,
    left: np.ndarray,
    right: np.ndarray,
    r: np.ndarray,
    alpha: np.ndarray,
    coupling: Optional[np.ndarray] = None,
    sign: float = 1.0,
    nonnegative: bool = False,
    notes: Optional[List[str]] = None
) -> np.ndarray:
    """
    Шаг по срезам: G_L R_k G_M + alpha_k R_k = B_k + sign * sum_j W_kj R_j

    Связанные срезы обновляются по Гауссу-Зейделю в порядке k = 0..N_r-1,
    несвязанные решаются одним пакетом. Незнакоопределенная система решается
    псевдообращением, событие записывается в notes.

    Args:
        x: Тензор
        left: Левый фактор сущностей
        right: Правый фактор сущностей
        r: Текущие срезы (для связи по W)
        alpha: Диагональные коэффициенты, длина N_r
        coupling: Матрица весов W (N_r x N_r) или None
        sign: Знак связи в правой части
        nonnegative: Проецировать каждый срез на R >= 0
        notes: Список для предупреждений

    Returns:
        Новые срезы (N_r, p, p)
    """
    system = KronEigenSystem(left.T @ left, right.T @ right)
    b = projected_slices(x, left, right)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (r.shape[0],))

    if coupling is None or not np.any(coupling):
        try:
            result = system.solve_batch(alpha, b)
        except NumericalError:
            result = np.stack([
                _solve_slice(system, alpha[k], b[k], k, notes) for k in range(r.shape[0])
            ])
        return np.clip(result, 0.0, None) if nonnegative else result

    result = np.array(r, dtype=np.float64)
    for k in range(r.shape[0]):
        rhs = b[k] + sign * np.tensordot(coupling[k], result, axes=(0, 0))
        result[k] = _solve_slice(system, alpha[k], rhs, k, notes)
        if nonnegative:
            result[k] = np.clip(result[k], 0.0, None)
    return result


def _solve_slice(
    system: KronEigenSystem,
    alpha: float,
    rhs: np.ndarray,
    k: int,
    notes: Optional[List[str]]
) -> np.ndarray:
    solution, indefinite = system.solve(alpha, rhs, allow_indefinite=True)
    if indefinite:
        message = f"R_{k} system is singular or indefinite (alpha={alpha:.3e}), least-norm solution used"
        logger.warning(message)
        if notes is not None:
            notes.append(message)
    return solution


def update_multipliers(multipliers: np.ndarray, r: np.ndarray, c: np.ndarray, step: float) -> np.ndarray:
    """
    Двойственный шаг lambda_ij <- lambda_ij + step * (||R_i - R_j||^2 + C_ij - 1)

    Диагональ остается нулевой.
    """
    updated = multipliers + step * (pairwise_slice_distances(r) + c - 1.0)
    np.fill_diagonal(updated, 0.0)
    return updated


def _zero_diagonal(matrix: np.ndarray) -> np.ndarray:
    matrix = np.array(matrix, dtype=np.float64)
    np.fill_diagonal(matrix, 0.0)
    return matrix


def similarity_coupling(c: np.ndarray, lambda_s: float, mode: CouplingMode) -> np.ndarray:
    """Веса связи срезов от слагаемого f_s"""
    if mode == CouplingMode.DERIVED:
        # самослагаемые не дают вклада, расстояние R_k до себя равно нулю
        return lambda_s * _zero_diagonal(c + c.T)
    return lambda_s * np.asarray(c, dtype=np.float64)


def multiplier_coupling(multipliers: np.ndarray, mode: CouplingMode) -> np.ndarray:
    """Веса связи срезов от множителей Лагранжа"""
    if mode == CouplingMode.DERIVED:
        return 2.0 * _zero_diagonal(multipliers + multipliers.T)
    return _zero_diagonal(multipliers)


def _check_model(f: FactorSet, x: SparseTensor3, *expected: ModelKind) -> None:
    if f.model not in expected:
        names = ', '.join(kind.value for kind in expected)
        raise ConfigError(f"Sweep for {names} cannot update {f.model.value} factors")
    if x.n_entities != f.n_entities or x.n_relations != f.n_relations:
        raise ShapeError(
            f"Tensor {x.shape} does not match factors (N_e={f.n_entities}, N_r={f.n_relations})"
        )


def _quadratic_sweep(
    f: FactorSet,
    x: SparseTensor3,
    h: Hyperparams,
    weights: Optional[np.ndarray],
    nonnegative: bool = False,
    notes: Optional[List[str]] = None
) -> Tuple[np.ndarray, np.ndarray]:
    a = update_entity_quadratic(x, f.a, f.r, h.lambda_A)
    if nonnegative:
        a = np.clip(a, 0.0, None)

    alpha = h.lambda_r + (weights.sum(axis=1) if weights is not None else 0.0)
    r = update_relations(x, a, a, f.r, alpha, weights, 1.0, nonnegative, notes)
    return a, r


def quadreg_sweep(
    f: FactorSet,
    x: SparseTensor3,
    c: SimilarityInput,
    h: Hyperparams,
    mode: CouplingMode = CouplingMode.DERIVED,
    notes: Optional[List[str]] = None
) -> FactorSet:
    """
    Проход Quad+Reg: правило RESCAL для A, затем срезы с регуляризацией сходства

    Args:
        f: Текущие факторы (quad_reg)
        x: Тензор
        c: Матрица сходства
        h: Гиперпараметры
        mode: Коэффициенты обновлений
        notes: Список для предупреждений решателя

    Returns:
        Новый FactorSet
    """
    _check_model(f, x, ModelKind.QUAD_REG)
    c = similarity_array(f.model, c, f.n_relations)
    weights = similarity_coupling(c, h.lambda_s, CouplingMode(mode))
    a, r = _quadratic_sweep(f, x, h, weights, notes=notes)
    return f.evolve(a=a, r=r)


def rescal_sweep(
    f: FactorSet,
    x: SparseTensor3,
    h: Hyperparams,
    mode: CouplingMode = CouplingMode.DERIVED,
    notes: Optional[List[str]] = None
) -> FactorSet:
    """Проход RESCAL (Quad+Reg без слагаемого сходства)"""
    _check_model(f, x, ModelKind.RESCAL, ModelKind.QUAD_REG)
    a, r = _quadratic_sweep(f, x, h, None, notes=notes)
    return f.evolve(a=a, r=r)


def nnrescal_sweep(
    f: FactorSet,
    x: SparseTensor3,
    h: Hyperparams,
    mode: CouplingMode = CouplingMode.DERIVED,
    notes: Optional[List[str]] = None
) -> FactorSet:
    """Проход RESCAL с проекцией A и каждого R_k на неотрицательный ортант"""
    _check_model(f, x, ModelKind.NN_RESCAL)
    a, r = _quadratic_sweep(f, x, h, None, nonnegative=True, notes=notes)
    return f.evolve(a=a, r=r)


def model2_sweep(
    f: FactorSet,
    x: SparseTensor3,
    c: SimilarityInput,
    h: Hyperparams,
    mode: CouplingMode = CouplingMode.DERIVED,
    notes: Optional[List[str]] = None
) -> FactorSet:
    """
    Проход Quad+Constraint

    A по правилу RESCAL, срезы с добавкой множителей в диагональ и правую
    часть, затем шаг по множителям.
    """
    _check_model(f, x, ModelKind.QUAD_CONSTRAINT)
    c = similarity_array(f.model, c, f.n_relations)
    mode = CouplingMode(mode)

    weights = multiplier_coupling(f.multipliers, mode)
    a, r = _quadratic_sweep(f, x, h, weights, notes=notes)
    multipliers = update_multipliers(f.multipliers, r, c, h.lagrange_step)
    return f.evolve(a=a, r=r, multipliers=multipliers)


def _linear_relations(
    f: FactorSet,
    x: SparseTensor3,
    a1: np.ndarray,
    a2: np.ndarray,
    base: Union[float, np.ndarray],
    weights: Optional[np.ndarray],
    sign: float,
    notes: Optional[List[str]]
) -> np.ndarray:
    alpha = base + (sign * weights.sum(axis=1) if weights is not None else 0.0)
    return update_relations(x, a1, a2, f.r, alpha, weights, sign, notes=notes)


def model1_sweep(
    f: FactorSet,
    x: SparseTensor3,
    c: SimilarityInput,
    h: Hyperparams,
    mode: CouplingMode = CouplingMode.DERIVED,
    notes: Optional[List[str]] = None
) -> FactorSet:
    """
    Проход Linear+Reg: A1, затем A2, затем срезы R_k

    В режиме derived проксимальный коэффициент равен 2/rho, числитель
    обновления сущностей содержит lambda_e * A_other, связь срезов идет
    с весами lambda_s (C_ki + C_ik). В режиме literal: 1/rho,
    lambda_A * A_other и диагональ lambda_s sum_i C_ki без правой части.

    Args:
        f: Текущие факторы (linear_reg)
        x: Тензор
        c: Матрица сходства
        h: Гиперпараметры
        mode: Коэффициенты обновлений
        notes: Список для предупреждений решателя

    Returns:
        Новый FactorSet
    """
    _check_model(f, x, ModelKind.LINEAR_REG)
    c = similarity_array(f.model, c, f.n_relations)
    mode = CouplingMode(mode)

    if mode == CouplingMode.DERIVED:
        prox = 2.0 * h.rho_inv
        tie = h.lambda_e
    else:
        prox = h.rho_inv
        tie = h.lambda_A

    diagonal = h.lambda_A + h.lambda_e + prox
    a1 = update_entity_left(x, f.a2, f.r, diagonal, tie * f.a2)
    a2 = update_entity_right(x, a1, f.r, diagonal, tie * a1)

    if mode == CouplingMode.DERIVED:
        weights = similarity_coupling(c, h.lambda_s, mode)
        r = _linear_relations(f, x, a1, a2, h.lambda_r + prox, weights, 1.0, notes)
    else:
        base = h.lambda_r + prox + h.lambda_s * c.sum(axis=1)
        r = _linear_relations(f, x, a1, a2, base, None, 1.0, notes)

    return f.evolve(a1=a1, a2=a2, r=r)


def model3_sweep(
    f: FactorSet,
    x: SparseTensor3,
    c: SimilarityInput,
    h: Hyperparams,
    mode: CouplingMode = CouplingMode.DERIVED,
    notes: Optional[List[str]] = None
) -> FactorSet:
    """
    Проход Linear+Constraint

    A1 <- (lambda_e A2 + sum_k X_k A2 R_k^T)(sum_k R_k A2^T A2 R_k^T + (lambda_a1 + lambda_e) I)^{-1},
    A2 зеркально, срезы с вычитанием множителей, затем шаг по множителям.
    """
    _check_model(f, x, ModelKind.LINEAR_CONSTRAINT)
    c = similarity_array(f.model, c, f.n_relations)
    mode = CouplingMode(mode)

    a1 = update_entity_left(x, f.a2, f.r, h.a1 + h.lambda_e, h.lambda_e * f.a2)
    a2 = update_entity_right(x, a1, f.r, h.a2 + h.lambda_e, h.lambda_e * a1)

    weights = multiplier_coupling(f.multipliers, mode)
    r = _linear_relations(f, x, a1, a2, h.lambda_r, weights, float(f.model.multiplier_sign), notes)
    multipliers = update_multipliers(f.multipliers, r, c, h.lagrange_step)
    return f.evolve(a1=a1, a2=a2, r=r, multipliers=multipliers)


SweepFn = Callable[..., FactorSet]

SWEEPS: Dict[ModelKind, SweepFn] = {
    ModelKind.RESCAL: lambda f, x, c, h, mode, notes: rescal_sweep(f, x, h, mode, notes),
    ModelKind.NN_RESCAL: lambda f, x, c, h, mode, notes: nnrescal_sweep(f, x, h, mode, notes),
    ModelKind.QUAD_REG: quadreg_sweep,
    ModelKind.QUAD_CONSTRAINT: model2_sweep,
    ModelKind.LINEAR_REG: model1_sweep,
    ModelKind.LINEAR_CONSTRAINT: model3_sweep
}


def run_sweep(
    f: FactorSet,
    x: SparseTensor3,
    c: SimilarityInput,
    h: Hyperparams,
    mode: CouplingMode = CouplingMode.DERIVED,
    notes: Optional[List[str]] = None
) -> FactorSet:
    """Один проход модели набора факторов f"""
    return SWEEPS[f.model](f, x, c, h, CouplingMode(mode), notes)
