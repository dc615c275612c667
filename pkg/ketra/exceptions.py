"""
Иерархия исключений ketra

Каждое исключение знает код выхода CLI: 2 - ошибки данных и конфигурации,
3 - численные сбои решателя.
"""
from pathlib import Path
from typing import Optional


class KetraError(Exception):
    """Базовое исключение пакета"""

    exit_code: int = 1


class TripleParseError(KetraError, ValueError):
    """Некорректная строка во входном TSV файле"""

    exit_code = 2

    def __init__(self, message: str, path: Optional[Path] = None, line_number: Optional[int] = None):
        self.path = path
        self.line_number = line_number
        location = ""
        if path is not None:
            location = f"{path}"
            if line_number is not None:
                location += f":{line_number}"
            location += ": "
        super().__init__(f"{location}{message}")


class DatasetError(KetraError, ValueError):
    """Пустой, отсутствующий или несовместимый набор данных"""

    exit_code = 2


class ConfigError(KetraError, ValueError):
    """Недопустимая конфигурация запуска"""

    exit_code = 2


class ShapeError(KetraError, ValueError):
    """Несогласованные размерности массивов"""

    exit_code = 2


class NumericalError(KetraError, ArithmeticError):
    """Численный сбой: вырожденная система, отрицательный спектр лапласиана, NaN"""

    exit_code = 3
