"""
Сервис загрузки троек знаний из TSV файлов
"""
import math
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
from loguru import logger

from ketra.exceptions import DatasetError, TripleParseError
from ketra.monitoring import measure_time
from ketra.seeding import STREAM_SUBSAMPLE, spawn_rng


class LiteralPolicy(str, Enum):
    """Обработка литеральных объектов (даты, числа)"""

    KEEP = 'keep'
    TAG_BY_TYPE = 'tag_by_type'


DATE_TAG = 'date'
NUMBER_TAG = 'number'

_NUMBER_PATTERN = re.compile(r'^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$')
_DATE_PREFIX = re.compile(r'^\d{4}-\d{2}-\d{2}')
# "1992-10-03 (xsd:date)" или "1992-10-03"^^xsd:date
_TYPE_ANNOTATION = re.compile(r'(\^\^\S+|\s*\(xsd:[^)]*\))$')


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """
    Граф знаний: словари сущностей и отношений плюс список троек

    Индексы назначаются в порядке первого появления. Тройки хранятся
    как неизменяемый массив (n, 3) из (субъект, отношение, объект).
    """

    entities: Dict[str, int]
    relations: Dict[str, int]
    triples: np.ndarray
    duplicates_dropped: int = 0

    def __post_init__(self):
        triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        triples.setflags(write=False)
        object.__setattr__(self, 'triples', triples)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def n_triples(self) -> int:
        return int(self.triples.shape[0])

    @property
    def entity_labels(self) -> List[str]:
        return list(self.entities)

    @property
    def relation_labels(self) -> List[str]:
        return list(self.relations)

    def triple_set(self) -> set:
        """Множество троек в виде кортежей индексов"""
        return set(map(tuple, self.triples.tolist()))

    def with_triples(self, triples: np.ndarray) -> 'KnowledgeGraph':
        """Граф с теми же словарями и другим набором троек"""
        return KnowledgeGraph(
            entities=self.entities,
            relations=self.relations,
            triples=np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        )

    def encode(self, subject: str, relation: str, obj: str) -> Tuple[int, int, int]:
        """
        Перевод меток тройки в индексы

        Raises:
            DatasetError: если метка отсутствует в словаре
        """
        try:
            return self.entities[subject], self.relations[relation], self.entities[obj]
        except KeyError as e:
            raise DatasetError(f"Unknown label {e.args[0]!r} in triple ({subject}, {relation}, {obj})")


@dataclass
class IngestionReport:
    """Отчет о загрузке набора данных"""

    source: str
    n_entities: int
    n_relations: int
    n_facts: int
    duplicates_dropped: int
    files: List[str] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"source: {self.source}",
            f"entities: {self.n_entities}",
            f"relations: {self.n_relations}",
            f"facts: {self.n_facts}",
            f"duplicates dropped: {self.duplicates_dropped}",
        ]
        if self.files:
            lines.append(f"files: {', '.join(self.files)}")
        return "\n".join(lines) + "\n"


def tag_literal(token: str) -> str:
    """
    Замена литерала фиксированным тегом типа

    Args:
        token: Объект тройки

    Returns:
        "date" для ISO-8601 дат, "number" для чисел, иначе исходный токен
    """
    value = _TYPE_ANNOTATION.sub('', token.strip()).strip().strip('"')

    if _DATE_PREFIX.match(value):
        for parser in (date.fromisoformat, datetime.fromisoformat):
            try:
                parser(value)
                return DATE_TAG
            except ValueError:
                continue

    if _NUMBER_PATTERN.match(value):
        return NUMBER_TAG

    return token


class _Interner:
    """Словари меток с индексами в порядке первого появления"""

    def __init__(self, entities: Optional[Dict[str, int]] = None, relations: Optional[Dict[str, int]] = None):
        self.entities: Dict[str, int] = dict(entities or {})
        self.relations: Dict[str, int] = dict(relations or {})

    def entity(self, label: str) -> int:
        return self.entities.setdefault(label, len(self.entities))

    def relation(self, label: str) -> int:
        return self.relations.setdefault(label, len(self.relations))


def _read_triples(
    path: Path,
    interner: _Interner,
    literal_policy: LiteralPolicy
) -> List[Tuple[int, int, int]]:
    """Построчный разбор TSV файла с интернированием меток"""
    triples = []

    with open(path, 'r', encoding='utf-8') as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.rstrip('\r\n')
            if not line.strip():
                continue

            fields = line.split('\t')
            if len(fields) != 3:
                raise TripleParseError(
                    f"expected 3 tab-separated fields, got {len(fields)}",
                    path=path,
                    line_number=line_number
                )

            subject, relation, obj = (token.strip() for token in fields)
            if not subject or not relation or not obj:
                raise TripleParseError("empty field", path=path, line_number=line_number)

            if literal_policy == LiteralPolicy.TAG_BY_TYPE:
                obj = tag_literal(obj)

            triples.append((interner.entity(subject), interner.relation(relation), interner.entity(obj)))

    return triples


def _deduplicate(triples: Iterable[Tuple[int, int, int]]) -> Tuple[List[Tuple[int, int, int]], int]:
    """Удаление повторов с сохранением порядка"""
    seen = set()
    unique = []
    total = 0
    for triple in triples:
        total += 1
        if triple not in seen:
            seen.add(triple)
            unique.append(triple)
    return unique, total - len(unique)


def ingest_triples(
    path: Union[str, Path],
    literal_policy: Union[LiteralPolicy, str] = LiteralPolicy.KEEP
) -> KnowledgeGraph:
    """
    Загрузка графа знаний из TSV файла subject<TAB>relation<TAB>object

    Args:
        path: Путь к файлу троек (UTF-8)
        literal_policy: keep или tag_by_type

    Returns:
        KnowledgeGraph без повторяющихся троек

    Raises:
        TripleParseError: строка с неверным числом полей
        DatasetError: файл отсутствует или пуст
    """
    path = Path(path)
    literal_policy = LiteralPolicy(literal_policy)

    if not path.is_file():
        raise DatasetError(f"Triple file not found: {path}")

    interner = _Interner()
    triples, duplicates = _deduplicate(_read_triples(path, interner, literal_policy))

    if not triples:
        raise DatasetError(f"Triple file is empty: {path}")

    if duplicates:
        logger.warning(f"Dropped {duplicates} duplicate triples from {path.name}")

    kg = KnowledgeGraph(
        entities=interner.entities,
        relations=interner.relations,
        triples=np.array(triples, dtype=np.int64),
        duplicates_dropped=duplicates
    )

    logger.info(
        f"Ingested {path.name}: {kg.n_entities} entities, "
        f"{kg.n_relations} relations, {kg.n_triples} triples"
    )
    return kg


def write_triples(kg: KnowledgeGraph, path: Union[str, Path]) -> None:
    """
    Сериализация графа обратно в TSV в порядке троек

    Args:
        kg: Граф знаний
        path: Путь к выходному файлу
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entity_labels = kg.entity_labels
    relation_labels = kg.relation_labels

    with open(path, 'w', encoding='utf-8') as f:
        for s, r, o in kg.triples.tolist():
            f.write(f"{entity_labels[s]}\t{relation_labels[r]}\t{entity_labels[o]}\n")

    logger.info(f"Wrote {kg.n_triples} triples to {path}")


def ingestion_report(kg: KnowledgeGraph, source: str = '', files: Optional[List[str]] = None) -> IngestionReport:
    """Отчет о загрузке для вывода в консоль"""
    return IngestionReport(
        source=source,
        n_entities=kg.n_entities,
        n_relations=kg.n_relations,
        n_facts=kg.n_triples,
        duplicates_dropped=kg.duplicates_dropped,
        files=files or []
    )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Набор данных из директории: объединенный граф и тройки по файлам-сплитам"""

    kg: KnowledgeGraph
    splits: Dict[str, np.ndarray]
    report: IngestionReport

    def split(self, name: str) -> np.ndarray:
        if name not in self.splits:
            raise DatasetError(f"Dataset has no '{name}' split (available: {sorted(self.splits)})")
        return self.splits[name]


class IngestionService:
    """Сервис для загрузки директории набора данных"""

    SPLIT_FILES = ('train', 'valid', 'test')
    ALLOWED_EXTENSIONS = {'.txt', '.tsv'}

    def __init__(self, literal_policy: Union[LiteralPolicy, str] = LiteralPolicy.KEEP):
        """
        Инициализация сервиса

        Args:
            literal_policy: Обработка литеральных объектов
        """
        self.literal_policy = LiteralPolicy(literal_policy)

    def discover_files(self, dataset_dir: Path) -> Dict[str, Path]:
        """
        Поиск файлов троек в директории

        Приоритет: train/valid/test; иначе единственный файл троек.

        Returns:
            Словарь имя сплита -> путь
        """
        if not dataset_dir.is_dir():
            raise DatasetError(f"Dataset directory not found: {dataset_dir}")

        files = {}
        for name in self.SPLIT_FILES:
            for ext in sorted(self.ALLOWED_EXTENSIONS):
                candidate = dataset_dir / f"{name}{ext}"
                if candidate.is_file():
                    files[name] = candidate
                    break

        if files:
            return files

        candidates = sorted(
            p for p in dataset_dir.iterdir()
            if p.is_file() and p.suffix.lower() in self.ALLOWED_EXTENSIONS
        )
        if not candidates:
            raise DatasetError(f"No triple files in {dataset_dir}")
        if len(candidates) > 1:
            raise DatasetError(
                f"Ambiguous dataset directory {dataset_dir}: "
                f"expected train/valid/test files or a single triple file, found {[p.name for p in candidates]}"
            )
        return {'all': candidates[0]}

    @measure_time('ingest')
    def load_dataset(self, dataset_dir: Union[str, Path]) -> Dataset:
        """
        Загрузка всех файлов директории в общее пространство словарей

        Args:
            dataset_dir: Директория набора данных

        Returns:
            Dataset с объединенным графом (без повторов) и тройками каждого файла
        """
        dataset_dir = Path(dataset_dir)
        files = self.discover_files(dataset_dir)

        interner = _Interner()
        splits = {}
        combined = []
        for name, path in files.items():
            triples, _ = _deduplicate(_read_triples(path, interner, self.literal_policy))
            splits[name] = np.array(triples, dtype=np.int64).reshape(-1, 3)
            combined.extend(triples)

        unique, duplicates = _deduplicate(combined)
        if not unique:
            raise DatasetError(f"Dataset is empty: {dataset_dir}")

        if duplicates:
            logger.warning(f"Dropped {duplicates} duplicate triples across {dataset_dir.name} files")

        kg = KnowledgeGraph(
            entities=interner.entities,
            relations=interner.relations,
            triples=np.array(unique, dtype=np.int64),
            duplicates_dropped=duplicates
        )
        report = ingestion_report(kg, source=str(dataset_dir), files=[p.name for p in files.values()])

        logger.info(
            f"Dataset {dataset_dir.name} loaded: {kg.n_entities} entities, "
            f"{kg.n_relations} relations, {kg.n_triples} facts"
        )
        return Dataset(kg=kg, splits=splits, report=report)


def subsample_subjects(kg: KnowledgeGraph, fraction: float, seed: int) -> KnowledgeGraph:
    """
    Сокращение числа субъектов графа при неизменном множестве объектов

    Субъекты - сущности, встречающиеся хотя бы раз в позиции субъекта.
    Словари сущностей и отношений сохраняются, поэтому форма тензора не меняется.

    Args:
        kg: Исходный граф
        fraction: Доля сохраняемых субъектов в (0, 1]
        seed: Сид выборки

    Returns:
        Граф с тройками выбранных субъектов
    """
    if not (0.0 < fraction <= 1.0) or math.isnan(fraction):
        raise DatasetError(f"Subject fraction must lie in (0, 1], got {fraction}")

    if fraction == 1.0:
        return kg

    subjects = np.unique(kg.triples[:, 0])
    n_keep = max(1, math.ceil(fraction * len(subjects) - 1e-9))

    rng = spawn_rng(seed, STREAM_SUBSAMPLE)
    kept = rng.choice(subjects, size=n_keep, replace=False)
    mask = np.isin(kg.triples[:, 0], kept)

    logger.info(
        f"Subsampled subjects: kept {n_keep}/{len(subjects)} "
        f"({int(mask.sum())}/{kg.n_triples} triples)"
    )
    return kg.with_triples(kg.triples[mask])
