"""
Линейная алгебра для замкнутых обновлений блоков
"""
from typing import Tuple, Union

import numpy as np
import scipy.linalg

from ketra.exceptions import NumericalError, ShapeError

SINGULAR_RCOND = 1e-12


class KronEigenSystem:
    """
    Системы ((G2 ⊗ G1) + alpha I) vec(R) = vec(B) через спектры G1 и G2

    Матрица p^2 x p^2 не строится: G1 = U1 D1 U1^T, G2 = U2 D2 U2^T, тогда
    R = U1 [(U1^T B U2) / (d1_i d2_j + alpha)] U2^T. Разложения считаются один
    раз и переиспользуются для всех срезов R_k.
    """

    def __init__(self, g1: np.ndarray, g2: np.ndarray):
        g1 = np.asarray(g1, dtype=np.float64)
        g2 = np.asarray(g2, dtype=np.float64)
        if g1.ndim != 2 or g1.shape[0] != g1.shape[1] or g2.ndim != 2 or g2.shape[0] != g2.shape[1]:
            raise ShapeError(f"Gram matrices must be square, got {g1.shape} and {g2.shape}")

        self.d1, self.u1 = np.linalg.eigh((g1 + g1.T) / 2.0)
        self.d2, self.u2 = np.linalg.eigh((g2 + g2.T) / 2.0)
        self.products = np.outer(self.d1, self.d2)
        self.scale = max(1.0, float(np.abs(self.products).max(initial=0.0)))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.d1.shape[0], self.d2.shape[0]

    def _check_rhs(self, rhs: np.ndarray) -> None:
        if rhs.shape[-2:] != self.shape:
            raise ShapeError(f"Right-hand side shape {rhs.shape} does not match system {self.shape}")

    def solve(self, alpha: float, rhs: np.ndarray, allow_indefinite: bool = False) -> Tuple[np.ndarray, bool]:
        """
        Решение одной системы

        Args:
            alpha: Диагональный сдвиг
            rhs: Правая часть B (p x q)
            allow_indefinite: Разрешить решение незнакоопределенной системы
                псевдообращением в собственном базисе

        Returns:
            Кортеж (R, флаг незнакоопределенности)

        Raises:
            NumericalError: система вырождена или незнакоопределена при allow_indefinite=False
        """
        rhs = np.asarray(rhs, dtype=np.float64)
        self._check_rhs(rhs)

        denominators = self.products + alpha
        tolerance = SINGULAR_RCOND * max(self.scale, abs(alpha))
        indefinite = bool(denominators.min() <= tolerance)

        projected = self.u1.T @ rhs @ self.u2
        if indefinite:
            if not allow_indefinite:
                raise NumericalError(
                    f"Kronecker system is singular or indefinite (min diagonal {denominators.min():.3e})"
                )
            # решение наименьшей нормы: нулевые направления отбрасываются
            safe = np.abs(denominators) > tolerance
            coefficients = np.zeros_like(projected)
            coefficients[safe] = projected[safe] / denominators[safe]
        else:
            coefficients = projected / denominators

        return self.u1 @ coefficients @ self.u2.T, indefinite

    def solve_batch(self, alpha: Union[float, np.ndarray], rhs: np.ndarray) -> np.ndarray:
        """
        Решение стека систем (K, p, q)

        Args:
            alpha: Общий сдвиг или вектор сдвигов длины K
            rhs: Правые части (K, p, q)

        Raises:
            NumericalError: хотя бы одна система вырождена или незнакоопределена
        """
        rhs = np.asarray(rhs, dtype=np.float64)
        self._check_rhs(rhs)

        shifts = np.broadcast_to(np.asarray(alpha, dtype=np.float64), (rhs.shape[0],))
        denominators = self.products[None, :, :] + shifts[:, None, None]
        tolerance = SINGULAR_RCOND * max(self.scale, float(np.abs(shifts).max(initial=0.0)))
        if denominators.size and denominators.min() <= tolerance:
            raise NumericalError(
                f"Kronecker system is singular or indefinite (min diagonal {denominators.min():.3e})"
            )

        projected = np.einsum('ip,kij,jq->kpq', self.u1, rhs, self.u2)
        return np.einsum('ip,kpq,jq->kij', self.u1, projected / denominators, self.u2)


def kron_ridge_solve(g1: np.ndarray, g2: np.ndarray, alpha: float, rhs: np.ndarray) -> np.ndarray:
    """
    Решение ((G2 ⊗ G1) + alpha I) vec(R) = vec(rhs) без построения p^2 x p^2 матрицы

    vec - векторизация по столбцам, так что система эквивалентна G1 R G2 + alpha R = rhs.

    Args:
        g1: Симметричная PSD матрица p x p
        g2: Симметричная PSD матрица q x q
        alpha: Неотрицательный сдвиг
        rhs: Правая часть p x q

    Returns:
        Матрица R p x q

    Raises:
        NumericalError: система вырождена
    """
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    solution, _ = KronEigenSystem(g1, g2).solve(alpha, rhs)
    return solution


def solve_right(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    """
    Y = N M^{-1} для симметричной M (обновление факторов сущностей)

    Raises:
        NumericalError: M вырождена или результат не конечен
    """
    try:
        result = scipy.linalg.solve(denominator.T, numerator.T, assume_a='sym').T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise NumericalError(f"Singular entity-factor system: {e}") from e

    if not np.all(np.isfinite(result)):
        raise NumericalError("Entity-factor update produced non-finite values")
    return result
