"""
Экспорт и загрузка факторов, трассы и манифестов запуска
"""
import hashlib
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd
from dotenv import dotenv_values
from loguru import logger

from ketra.exceptions import DatasetError
from .models import FactorSet, ModelKind
from .training_service import SolverTrace

MANIFEST_FILE = 'manifest.txt'
FLOAT_FORMAT = '%.17g'


def format_manifest(entries: Mapping[str, object]) -> str:
    """Тело манифеста: строки key=value в порядке сортировки ключей"""
    return ''.join(f"{key}={entries[key]}\n" for key in sorted(entries))


def manifest_hash(entries: Mapping[str, object]) -> str:
    """SHA-256 тела манифеста"""
    return hashlib.sha256(format_manifest(entries).encode('utf-8')).hexdigest()


def write_manifest(entries: Mapping[str, object], out_dir: Union[str, Path]) -> Path:
    """
    Запись manifest.txt в каталог запуска

    Args:
        entries: Разрешенная конфигурация запуска
        out_dir: Выходной каталог

    Returns:
        Путь к манифесту
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / MANIFEST_FILE
    path.write_text(format_manifest(entries), encoding='utf-8')
    logger.info(f"Manifest written: {path} (sha256={manifest_hash(entries)[:12]})")
    return path


def read_manifest(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_FILE
    if not path.exists():
        raise DatasetError(f"Manifest not found: {path}")
    return {key: value for key, value in dotenv_values(path).items() if value is not None}


def save_factors(f: FactorSet, out_dir: Union[str, Path], manifest: Optional[Mapping[str, object]] = None) -> Path:
    """
    Экспорт факторов: один CSV на матрицу плюс manifest.txt

    Файлы: A.csv или A1.csv/A2.csv, R_<k>.csv, multipliers.csv (модели с ограничениями).

    Args:
        f: Набор факторов
        out_dir: Выходной каталог
        manifest: Дополнительные поля манифеста (сид, гиперпараметры, число проходов)

    Returns:
        Путь к каталогу
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    for name, matrix in f.matrices().items():
        pd.DataFrame(matrix).to_csv(out_dir / f"{name}.csv", header=False, index=False, float_format=FLOAT_FORMAT)

    entries = dict(manifest or {})
    entries.update({
        'model': f.model.value,
        'kind': f.kind.value,
        'p': f.rank,
        'n_entities': f.n_entities,
        'n_relations': f.n_relations
    })
    write_manifest(entries, out_dir)

    logger.info(f"Factors exported: {out_dir} ({len(f.matrices())} matrices)")
    return out_dir


def _read_matrix(path: Path) -> np.ndarray:
    if not path.exists():
        raise DatasetError(f"Factor file not found: {path}")
    return pd.read_csv(path, header=None, float_precision='round_trip').to_numpy(dtype=np.float64)


def load_factors(factor_dir: Union[str, Path]) -> Tuple[FactorSet, Dict[str, str]]:
    """
    Загрузка факторов, записанных save_factors

    Args:
        factor_dir: Каталог с CSV и manifest.txt

    Returns:
        Кортеж (FactorSet, манифест)

    Raises:
        DatasetError: нет манифеста или файла матрицы
    """
    factor_dir = Path(factor_dir)
    manifest = read_manifest(factor_dir)

    try:
        model = ModelKind(manifest['model'])
        n_relations = int(manifest['n_relations'])
    except (KeyError, ValueError) as e:
        raise DatasetError(f"Invalid factor manifest in {factor_dir}: {e}") from e

    r = np.stack([_read_matrix(factor_dir / f"R_{k}.csv") for k in range(n_relations)])
    if model.is_linear:
        entity = {'a1': _read_matrix(factor_dir / 'A1.csv'), 'a2': _read_matrix(factor_dir / 'A2.csv')}
    else:
        entity = {'a': _read_matrix(factor_dir / 'A.csv')}
    multipliers = _read_matrix(factor_dir / 'multipliers.csv') if model.is_constrained else None

    factors = FactorSet(model=model, r=r, multipliers=multipliers, **entity)
    logger.info(f"Factors loaded: {factor_dir}, model={model.value}, N_e={factors.n_entities}, p={factors.rank}")
    return factors, manifest


def trace_to_csv(trace: SolverTrace, path: Union[str, Path]) -> Path:
    """CSV трассы: sweep, objective, f, g, f_s, f_rho, f_lag, delta, seconds"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT)
    reason = trace.termination.value if trace.termination else 'running'
    logger.info(f"Trace written: {path} ({len(trace)} sweeps, {reason})")
    return path
