"""
Подбор гиперпараметров покоординатным спуском по сетке
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from ketra.evaluation.metrics import auc, report_from_scores, tune_threshold
from ketra.evaluation.test_sets import LabeledTriples
from ketra.exceptions import ConfigError, DatasetError, KetraError
from ketra.ingestion.tensor import SparseTensor3
from ketra.monitoring import measure_time
from ketra.similarity import SimilarityMatrix
from .models import Hyperparams, ModelKind, score_triples
from .training_service import FitConfig, fit

MAX_PASSES = 3

GRID_VALUES: Dict[str, List[float]] = {
    'lambda_A': [0.0001, 0.01, 0.1, 0, 1, 10, 100, 1000],
    'lambda_r': [0.002, 0.2, 0.01, 0.1, 0, 1, 10, 100, 1000],
    'lambda_e': [1, 2, 5, 10],
    'lambda_s': [0.00002, 0.02, 0.2, 0.1, 0, 1],
}

METRICS = ('auc', 'f1_micro')


def default_grid(kind: Union[ModelKind, str]) -> Dict[str, List[float]]:
    """Сетка для модели: lambda_e только у линейных, lambda_s только у регуляризованных"""
    kind = ModelKind(kind)
    grid = {'lambda_A': GRID_VALUES['lambda_A'], 'lambda_r': GRID_VALUES['lambda_r']}
    if kind.is_linear:
        grid['lambda_e'] = GRID_VALUES['lambda_e']
    if kind.is_regularized:
        grid['lambda_s'] = GRID_VALUES['lambda_s']
    return {name: list(values) for name, values in grid.items()}


@dataclass(frozen=True)
class SearchTrial:
    """Одна оцененная конфигурация"""

    params: Dict[str, float]
    metric: float
    error: Optional[str] = None


@dataclass
class SearchResult:
    """Результат покоординатного спуска"""

    best: Hyperparams
    best_metric: float
    passes: int
    trials: List[SearchTrial] = field(default_factory=list)


def _key(h: Hyperparams) -> Tuple:
    return tuple(sorted(h.model_dump().items()))


def coordinate_descent(
    evaluate: Callable[[Hyperparams], float],
    base: Hyperparams,
    grid: Mapping[str, Sequence[float]],
    max_passes: int = MAX_PASSES,
    threads: int = 1
) -> SearchResult:
    """
    Покоординатный спуск: по одному гиперпараметру за раз от лучшей найденной точки

    Стартовая точка - первые значения сетки. Переход выполняется только при
    строгом улучшении; среди равных кандидатов побеждает первый по порядку
    сетки. Проходы повторяются, пока хотя бы один параметр меняется
    (не более max_passes). Повторные конфигурации берутся из кэша.

    Args:
        evaluate: Метрика конфигурации (больше - лучше)
        base: Значения параметров вне сетки
        grid: Значения по параметрам
        max_passes: Максимум проходов
        threads: Потоков на оценку кандидатов одной координаты

    Returns:
        SearchResult
    """
    for name, values in grid.items():
        if name not in Hyperparams.model_fields:
            raise ConfigError(f"Unknown hyperparameter in grid: {name}")
        if not values:
            raise ConfigError(f"Empty grid for {name}")

    cache: Dict[Tuple, SearchTrial] = {}
    trials: List[SearchTrial] = []

    def score(h: Hyperparams) -> SearchTrial:
        try:
            value = float(evaluate(h))
            return SearchTrial(params=h.model_dump(), metric=value if np.isfinite(value) else -np.inf)
        except KetraError as e:
            logger.warning(f"Configuration failed {h.model_dump()}: {e}")
            return SearchTrial(params=h.model_dump(), metric=-np.inf, error=str(e))

    def evaluate_all(candidates: List[Hyperparams]) -> List[float]:
        pending = []
        for h in candidates:
            if _key(h) not in cache and all(_key(h) != _key(p) for p in pending):
                pending.append(h)
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            for h, trial in zip(pending, pool.map(score, pending)):
                cache[_key(h)] = trial
                trials.append(trial)
        return [cache[_key(h)].metric for h in candidates]

    best = base.model_copy(update={name: values[0] for name, values in grid.items()})
    best_metric = evaluate_all([best])[0]

    passes = 0
    for passes in range(1, max_passes + 1):
        changed = False
        for name, values in grid.items():
            candidates = [best.model_copy(update={name: value}) for value in values]
            metrics = evaluate_all(candidates)
            index = int(np.argmax(metrics))
            if metrics[index] > best_metric:
                logger.info(f"Search pass {passes}: {name} {getattr(best, name)} -> {values[index]} "
                            f"(metric {best_metric:.4f} -> {metrics[index]:.4f})")
                best, best_metric = candidates[index], metrics[index]
                changed = True
        if not changed:
            break

    logger.info(f"Search finished after {passes} passes, {len(trials)} evaluations, best metric {best_metric:.4f}")
    return SearchResult(best=best, best_metric=best_metric, passes=passes, trials=trials)


def validation_metric(metric: str, scores: np.ndarray, validation: LabeledTriples) -> float:
    """AUC или micro-F1 при пороге, подобранном на тех же данных"""
    if metric == 'auc':
        return auc(scores, validation.labels)
    if metric == 'f1_micro':
        threshold = tune_threshold(scores, validation.labels)
        return report_from_scores(scores, validation.labels, validation.relations, threshold).f1_micro
    raise ConfigError(f"Unknown search metric: {metric} (expected one of {METRICS})")


@measure_time('search')
def hyper_search(
    kind: Union[ModelKind, str],
    x: SparseTensor3,
    c: Optional[Union[SimilarityMatrix, np.ndarray]],
    validation: LabeledTriples,
    grid: Optional[Mapping[str, Sequence[float]]] = None,
    metric: str = 'auc',
    base: Optional[Hyperparams] = None,
    cfg: Optional[FitConfig] = None,
    threads: int = 1,
    return_result: bool = False
) -> Union[Hyperparams, SearchResult]:
    """
    Подбор гиперпараметров по валидационной метрике

    Args:
        kind: Модель
        x: Тензор обучающего графа
        c: Матрица сходства
        validation: Валидационный набор
        grid: Сетка (по умолчанию списки default_grid)
        metric: 'auc' или 'f1_micro'
        base: Значения параметров вне сетки
        cfg: Параметры решателя
        threads: Потоков на оценку кандидатов
        return_result: Вернуть SearchResult целиком

    Returns:
        Лучшие Hyperparams (или SearchResult)

    Raises:
        DatasetError: валидационный набор пуст или одноклассовый
    """
    kind = ModelKind(kind)
    if len(validation) == 0 or not validation.has_both_classes:
        raise DatasetError("Validation set must contain both positive and negative items")
    if metric not in METRICS:
        raise ConfigError(f"Unknown search metric: {metric} (expected one of {METRICS})")

    grid = dict(grid) if grid is not None else default_grid(kind)
    cfg = cfg or FitConfig()
    base = base or Hyperparams()

    def evaluate(h: Hyperparams) -> float:
        factors, _ = fit(kind, x, c, h, cfg)
        scores = score_triples(factors, validation.subjects, validation.relations, validation.objects)
        return validation_metric(metric, scores, validation)

    sizes = {name: len(values) for name, values in grid.items()}
    logger.info(f"Hyperparameter search: model={kind.value}, grid sizes={sizes}")
    result = coordinate_descent(evaluate, base, grid, threads=threads)
    return result if return_result else result.best
