"""
Выведение под-сидов из одного корневого сида запуска

Каждый стохастический шаг получает собственный поток, адресуемый фиксированным
индексом, поэтому порядок вызовов не влияет на результат.
"""
import numpy as np

STREAM_INIT = 0
STREAM_TEST_SET = 1
STREAM_VALIDATION = 2
STREAM_SUBSAMPLE = 3


def spawn_rng(seed: int, stream: int) -> np.random.Generator:
    """
    Генератор для потока ``stream`` корневого сида ``seed``

    Args:
        seed: Корневой сид запуска
        stream: Индекс потока (STREAM_*)

    Returns:
        Независимый numpy Generator
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))
