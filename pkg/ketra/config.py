"""
Конфигурация: переменные окружения и файл запуска key=value
"""
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from ketra.evaluation import EvalMode
from ketra.exceptions import ConfigError
from ketra.ingestion import LiteralPolicy
from ketra.similarity import Encoding
from ketra.training import CouplingMode, FitConfig, Hyperparams, ModelKind

SECTIONS = ('model', 'hyperparams', 'fit', 'eval')
PATH_KEYS = (('dataset_dir',), ('output_dir',), ('eval', 'test_file'))


class KetraSettings(BaseSettings):
    """Настройки процесса из окружения (префикс KETRA_) и файла .env"""

    model_config = SettingsConfigDict(env_prefix='KETRA_', env_file='.env', extra='ignore')

    log_level: str = 'INFO'
    log_file: Optional[str] = None
    threads: Optional[int] = Field(default=None, ge=1)
    seed: int = 42
    tracking_uri: Optional[str] = None
    experiment_name: str = 'ketra'
    data_dir: Optional[str] = None

    @property
    def resolved_threads(self) -> int:
        return self.threads or os.cpu_count() or 1


class ModelOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    kind: ModelKind
    encoding: Optional[Encoding] = None
    literal_policy: LiteralPolicy = LiteralPolicy.KEEP


class FitOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    max_iter: int = Field(default=100, ge=1)
    tol: float = Field(default=1e-6, gt=0)
    coupling_mode: CouplingMode = CouplingMode.DERIVED


class EvalOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    mode: EvalMode = EvalMode.STRATIFIED_UNIFORM
    per_slice: Optional[int] = Field(default=None, ge=1)
    repeats: int = Field(default=5, ge=1)
    test_file: Optional[Path] = None
    exact: bool = False


class RunConfig(BaseModel):
    """
    Конфигурация запуска

    Attributes:
        dataset_dir: Директория набора данных
        output_dir: Директория результатов
        seed: Корневой сид (по умолчанию из KetraSettings)
        model: Модель, кодировка сходства, обработка литералов
        hyperparams: Гиперпараметры
        fit: Параметры решателя
        eval: Протокол оценки
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    dataset_dir: Path
    output_dir: Path = Path('runs')
    seed: Optional[int] = None
    model: ModelOptions
    hyperparams: Hyperparams = Field(default_factory=Hyperparams)
    fit: FitOptions = Field(default_factory=FitOptions)
    eval: EvalOptions = Field(default_factory=EvalOptions)

    @model_validator(mode='after')
    def _check_similarity(self) -> 'RunConfig':
        if self.model.kind.uses_similarity and self.model.encoding is None:
            raise ValueError(f"model {self.model.kind.value} requires model.encoding (relation similarity)")
        if self.eval.mode != EvalMode.STRATIFIED_UNIFORM and self.eval.test_file is None:
            raise ValueError(f"eval.mode={self.eval.mode.value} requires eval.test_file")
        return self

    def fit_config(self, seed: int) -> FitConfig:
        return FitConfig(
            max_iter=self.fit.max_iter,
            tol=self.fit.tol,
            coupling_mode=self.fit.coupling_mode,
            seed=seed
        )

    def manifest_entries(self, seed: int) -> Dict[str, str]:
        """Плоское представление для manifest.txt"""
        entries = {'dataset_dir': str(self.dataset_dir), 'output_dir': str(self.output_dir), 'seed': str(seed)}
        for section in SECTIONS:
            for key, value in getattr(self, section).model_dump().items():
                entries[f"{section}.{key}"] = plain_value(value)
        if self.model.kind.is_constrained:
            entries['fit.multiplier_sign'] = str(self.model.kind.multiplier_sign)
        return entries


def plain_value(value: Any) -> str:
    """Значение для файла key=value: перечисления по значению, None пустой строкой"""
    if value is None:
        return ''
    if isinstance(value, Enum):
        return str(value.value)
    return str(value)


def fold_dotted(values: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Плоские ключи section.key -> вложенные словари

    Гиперпараметры допускаются и в секции model (model.rank, model.lambda_s).

    Raises:
        ConfigError: неизвестная секция или слишком глубокий ключ
    """
    nested: Dict[str, Any] = {}
    for raw_key, value in values.items():
        if value is None or value == '':
            continue
        parts = raw_key.strip().split('.')
        if len(parts) == 1:
            nested[parts[0]] = value
            continue
        if len(parts) != 2 or parts[0] not in SECTIONS:
            raise ConfigError(f"Unknown configuration key: {raw_key}")

        section, key = parts
        if section == 'model' and key in Hyperparams.model_fields:
            section = 'hyperparams'
        nested.setdefault(section, {})[key] = value
    return nested


def _resolve_paths(nested: Dict[str, Any], base_dir: Path) -> None:
    for path_key in PATH_KEYS:
        container = nested
        for part in path_key[:-1]:
            container = container.get(part, {}) if isinstance(container, dict) else {}
        leaf = path_key[-1]
        if isinstance(container, dict) and leaf in container:
            path = Path(str(container[leaf])).expanduser()
            container[leaf] = path if path.is_absolute() else base_dir / path


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    """
    Чтение файла запуска и применение переопределений CLI

    Относительные пути файла разрешаются от его директории.

    Args:
        path: Файл key=value (комментарии через #)
        overrides: Плоские ключи с приоритетом над файлом

    Returns:
        RunConfig

    Raises:
        ConfigError: файла нет, неизвестный ключ или недопустимое значение
    """
    nested: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        nested = fold_dotted(dotenv_values(path))
        _resolve_paths(nested, path.resolve().parent)

    for section, value in fold_dotted(overrides or {}).items():
        if isinstance(value, dict):
            nested.setdefault(section, {}).update(value)
        else:
            nested[section] = value

    try:
        return RunConfig.model_validate(nested)
    except ValidationError as e:
        raise ConfigError(f"Invalid run configuration: {e}") from e
