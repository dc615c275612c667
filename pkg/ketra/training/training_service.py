"""
Решатель: проходы ALS до сходимости с трассировкой
"""
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from ketra.exceptions import ConfigError, NumericalError, ShapeError
from ketra.ingestion.tensor import SparseTensor3
from ketra.monitoring import ExperimentTracker, MetricsService
from ketra.similarity import SimilarityMatrix
from .models import (
    CouplingMode,
    FactorSet,
    Hyperparams,
    ModelKind,
    ObjectiveBreakdown,
    init_factors,
    objective_value,
    similarity_array,
)
from .sweeps import run_sweep

MONOTONICITY_SLACK = 1e-10

TRACE_COLUMNS = ['sweep', 'objective', 'f', 'g', 'f_s', 'f_rho', 'f_lag', 'delta', 'seconds']


class FitConfig(BaseModel):
    """Параметры решателя"""

    model_config = ConfigDict(frozen=True, extra='forbid')

    max_iter: int = Field(default=100, ge=1)
    tol: float = Field(default=1e-6, gt=0)
    coupling_mode: CouplingMode = CouplingMode.DERIVED
    seed: int = 42


class TerminationReason(str, Enum):
    MAX_ITER = 'max_iter'
    DELTA_BELOW_TOL = 'delta_below_tol'
    WARNING_FALLBACK = 'warning_fallback'


@dataclass(frozen=True)
class SweepRecord:
    """Запись об одном проходе"""

    sweep: int
    breakdown: ObjectiveBreakdown
    delta: float
    seconds: float
    warnings: List[str] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.breakdown.total

    def as_row(self) -> dict:
        row = {'sweep': self.sweep}
        row.update(self.breakdown.as_dict())
        row['delta'] = self.delta
        row['seconds'] = self.seconds
        return row


@dataclass
class SolverTrace:
    """Трасса решателя: одна запись на завершенный проход"""

    model: ModelKind
    records: List[SweepRecord] = field(default_factory=list)
    termination: Optional[TerminationReason] = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def objectives(self) -> List[float]:
        return [record.objective for record in self.records]

    @property
    def deltas(self) -> List[float]:
        return [record.delta for record in self.records]

    @property
    def warnings(self) -> List[str]:
        return [w for record in self.records for w in record.warnings]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([record.as_row() for record in self.records], columns=TRACE_COLUMNS)


def delta(z_prev: np.ndarray, z_next: np.ndarray) -> float:
    """
    Максимальное относительное изменение неизвестных

    max_i |(z_prev_i - z_next_i) / ((z_prev_i + z_next_i) / 2)|, где 0/0 = 0.
    Ненулевое изменение при нулевом среднем дает inf.

    Args:
        z_prev: Неизвестные до прохода (FactorSet.unknowns())
        z_next: Неизвестные после прохода

    Returns:
        Значение delta

    Raises:
        ShapeError: длины векторов различаются
    """
    z_prev = np.asarray(z_prev, dtype=np.float64).ravel()
    z_next = np.asarray(z_next, dtype=np.float64).ravel()
    if z_prev.shape != z_next.shape:
        raise ShapeError(f"Unknown vectors differ in length: {z_prev.size} vs {z_next.size}")
    if z_prev.size == 0:
        return 0.0

    change = np.abs(z_prev - z_next)
    mean = np.abs((z_prev + z_next) / 2.0)

    ratio = np.zeros_like(change)
    moved = change > 0
    with np.errstate(divide='ignore'):
        ratio[moved] = change[moved] / mean[moved]
    return float(ratio.max())


def fit(
    kind: Union[ModelKind, str],
    x: SparseTensor3,
    c: Optional[Union[SimilarityMatrix, np.ndarray]],
    h: Hyperparams,
    cfg: Optional[FitConfig] = None,
    callback: Optional[Callable[[SweepRecord], None]] = None,
    tracker: Optional[ExperimentTracker] = None,
    initial: Optional[FactorSet] = None
) -> Tuple[FactorSet, SolverTrace]:
    """
    Обучение модели с холодного старта

    Проходы повторяются до delta < tol или до max_iter проходов.
    Монотонность целевой функции только логируется.

    Args:
        kind: Модель
        x: Тензор обучающего графа
        c: Матрица сходства (обязательна для моделей со сходством)
        h: Гиперпараметры
        cfg: Параметры решателя
        callback: Вызывается после каждого прохода с его записью
        tracker: Трекер экспериментов для пошаговых метрик
        initial: Начальные факторы вместо случайной инициализации

    Returns:
        Кортеж (FactorSet, SolverTrace)

    Raises:
        ConfigError: нет матрицы сходства для модели, которой она нужна
        NumericalError: вырожденная система сущностей или нечисловая целевая функция
    """
    kind = ModelKind(kind)
    cfg = cfg or FitConfig()
    c = similarity_array(kind, c, x.n_relations)

    if initial is not None and initial.model != kind:
        raise ConfigError(f"Initial factors belong to {initial.model.value}, not {kind.value}")
    factors = initial if initial is not None else init_factors(kind, x.n_entities, x.n_relations, h, cfg.seed)
    trace = SolverTrace(model=kind)

    logger.info(
        f"Fit started: model={kind.value}, shape={x.shape}, nnz={x.nnz}, "
        f"p={factors.rank}, max_iter={cfg.max_iter}, mode={cfg.coupling_mode.value}"
    )
    if kind.multiplier_sign < 0:
        logger.warning(
            f"{kind.value} subtracts multiplier sums in the R_k step (multiplier_sign=-1), "
            f"opposite to {ModelKind.QUAD_CONSTRAINT.value}; large multipliers make R_k systems indefinite "
            f"and are solved by the least-norm fallback"
        )
    check_monotone = kind == ModelKind.LINEAR_REG and h.rho_inv > 0
    previous_objective = math.inf
    reason = TerminationReason.MAX_ITER

    for sweep in range(1, cfg.max_iter + 1):
        notes: List[str] = []
        start_time = time.perf_counter()
        updated = run_sweep(factors, x, c, h, cfg.coupling_mode, notes)
        seconds = time.perf_counter() - start_time

        breakdown = objective_value(kind, updated, x, c, h)
        if not math.isfinite(breakdown.total):
            raise NumericalError(f"Objective became non-finite at sweep {sweep}")

        change = delta(factors.unknowns(), updated.unknowns())
        record = SweepRecord(sweep=sweep, breakdown=breakdown, delta=change, seconds=seconds, warnings=notes)
        trace.records.append(record)

        logger.debug(f"Sweep {sweep}: objective={breakdown.total:.6e}, delta={change:.3e}, {seconds:.3f}s")
        if check_monotone and breakdown.total > previous_objective + MONOTONICITY_SLACK:
            logger.warning(
                f"Objective increased at sweep {sweep}: {previous_objective:.10e} -> {breakdown.total:.10e}"
            )

        MetricsService.record_sweep(kind.value, seconds, breakdown.total)
        if tracker is not None and math.isfinite(change):
            tracker.log_metrics({'objective': breakdown.total, 'delta': change}, step=sweep)
        if callback is not None:
            callback(record)

        factors = updated
        previous_objective = breakdown.total

        if notes and not math.isfinite(change):
            reason = TerminationReason.WARNING_FALLBACK
            break
        if change < cfg.tol:
            reason = TerminationReason.DELTA_BELOW_TOL
            break

    trace.termination = reason
    MetricsService.record_fit(kind.value, reason.value)
    logger.info(
        f"Fit finished: model={kind.value}, sweeps={len(trace)}, reason={reason.value}, "
        f"objective={previous_objective:.6e}"
    )
    return factors, trace
