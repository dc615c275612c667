"""
Опциональный трекинг экспериментов в MLflow
"""
from pathlib import Path
from typing import Dict, Optional, Union

from loguru import logger


class ExperimentTracker:
    """
    Обертка над MLflow

    Без tracking_uri все методы ничего не делают, и mlflow не импортируется.
    """

    def __init__(self, tracking_uri: Optional[str] = None, experiment_name: str = 'ketra'):
        self.tracking_uri = tracking_uri
        self.experiment_name = experiment_name
        self._mlflow = None

        if tracking_uri:
            import mlflow

            mlflow.set_tracking_uri(tracking_uri)
            mlflow.set_experiment(experiment_name)
            self._mlflow = mlflow
            logger.info(f"MLflow tracking enabled: {tracking_uri}, experiment={experiment_name}")

    @property
    def enabled(self) -> bool:
        return self._mlflow is not None

    def start_run(self, run_name: Optional[str] = None):
        """Контекст запуска; без трекинга - пустой контекст"""
        if not self.enabled:
            return _NullRun()
        return self._mlflow.start_run(run_name=run_name)

    def log_params(self, params: Dict[str, object]) -> None:
        if self.enabled:
            self._mlflow.log_params({k: str(v) for k, v in params.items()})

    def log_metrics(self, metrics: Dict[str, float], step: Optional[int] = None) -> None:
        if self.enabled:
            self._mlflow.log_metrics({k: float(v) for k, v in metrics.items()}, step=step)

    def log_artifact(self, path: Union[str, Path]) -> None:
        if self.enabled:
            self._mlflow.log_artifact(str(path))


class _NullRun:
    def __enter__(self):
        return None

    def __exit__(self, exc_type, exc, tb):
        return False
