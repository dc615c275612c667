"""
Prometheus метрики решателя и оценки
"""
from pathlib import Path
from typing import Union

from loguru import logger
from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, write_to_textfile

# Отдельный реестр процесса: метрики пишутся в текстовый файл после команды
REGISTRY = CollectorRegistry()

sweeps_total = Counter(
    'ketra_sweeps_total',
    'Количество выполненных проходов ALS',
    ['model'],
    registry=REGISTRY
)

sweep_seconds = Histogram(
    'ketra_sweep_seconds',
    'Длительность прохода ALS в секундах',
    ['model'],
    buckets=[0.001, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 30.0],
    registry=REGISTRY
)

fits_total = Counter(
    'ketra_fits_total',
    'Количество завершенных обучений',
    ['model', 'reason'],
    registry=REGISTRY
)

objective_value = Gauge(
    'ketra_objective',
    'Значение целевой функции после последнего прохода',
    ['model'],
    registry=REGISTRY
)

eval_auc = Gauge(
    'ketra_eval_auc',
    'AUC последней оценки',
    ['model'],
    registry=REGISTRY
)

stage_seconds = Histogram(
    'ketra_stage_seconds',
    'Длительность этапа конвейера в секундах',
    ['stage', 'status'],
    buckets=[0.01, 0.1, 1.0, 10.0, 60.0, 600.0, 3600.0],
    registry=REGISTRY
)


class MetricsService:
    """Запись метрик решателя и оценки"""

    @staticmethod
    def record_sweep(model: str, seconds: float, objective: float) -> None:
        sweeps_total.labels(model=model).inc()
        sweep_seconds.labels(model=model).observe(seconds)
        objective_value.labels(model=model).set(objective)

    @staticmethod
    def record_fit(model: str, reason: str) -> None:
        fits_total.labels(model=model, reason=reason).inc()

    @staticmethod
    def record_auc(model: str, auc: float) -> None:
        eval_auc.labels(model=model).set(auc)

    @staticmethod
    def record_stage(stage: str, seconds: float, failed: bool = False) -> None:
        stage_seconds.labels(stage=stage, status='failed' if failed else 'ok').observe(seconds)

    @staticmethod
    def export(path: Union[str, Path]) -> Path:
        """
        Запись реестра в текстовом формате Prometheus

        Args:
            path: Файл метрик (обычно <output_dir>/metrics.prom)

        Returns:
            Путь к файлу
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_to_textfile(str(path), REGISTRY)
        logger.debug(f"Metrics written: {path}")
        return path
