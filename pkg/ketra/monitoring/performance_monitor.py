"""
Замер длительности этапов конвейера
"""
import time
from functools import wraps
from typing import Any, Callable, Optional

from loguru import logger

from .metrics_service import MetricsService


class PerformanceMonitor:
    """Класс для мониторинга производительности"""

    @staticmethod
    def measure_time(stage: Optional[str] = None) -> Callable:
        """
        Декоратор для измерения времени выполнения этапа

        Длительность пишется в лог и в гистограмму ketra_stage_seconds,
        в том числе при исключении.

        Args:
            stage: Имя этапа (по умолчанию имя функции)

        Returns:
            Декоратор
        """
        def decorator(func: Callable) -> Callable:
            name = stage or func.__name__

            @wraps(func)
            def wrapper(*args, **kwargs) -> Any:
                start_time = time.perf_counter()
                try:
                    result = func(*args, **kwargs)
                except Exception as e:
                    elapsed_time = time.perf_counter() - start_time
                    MetricsService.record_stage(name, elapsed_time, failed=True)
                    logger.error(f"Stage '{name}' failed after {elapsed_time:.4f}s: {e}")
                    raise

                elapsed_time = time.perf_counter() - start_time
                MetricsService.record_stage(name, elapsed_time)
                logger.info(f"Stage '{name}' finished in {elapsed_time:.4f}s")
                return result

            return wrapper
        return decorator


measure_time = PerformanceMonitor.measure_time
