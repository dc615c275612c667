"""
Модуль мониторинга и метрик
"""
from .metrics_service import REGISTRY, MetricsService
from .performance_monitor import PerformanceMonitor, measure_time
from .tracking import ExperimentTracker

__all__ = ['REGISTRY', 'ExperimentTracker', 'MetricsService', 'PerformanceMonitor', 'measure_time']
