"""
Протокол оценки: разбиение, обучение, подбор порога, отчеты, анализ плотности
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger

from ketra.exceptions import ConfigError, DatasetError
from ketra.ingestion import KnowledgeGraph, build_tensor, subsample_subjects
from ketra.monitoring import MetricsService, measure_time
from ketra.similarity import Encoding, compute_similarity
from ketra.training import FactorSet, FitConfig, Hyperparams, ModelKind, fit, score_triples
from .metrics import EvalReport, auc, classify_and_report, tune_threshold
from .test_sets import (
    LabeledTriples,
    make_test_set,
    make_validation_set,
    stratified_weighted_test_set,
)

LARGE_GRAPH_ENTITIES = 15000
SMALL_PER_SLICE = 10
LARGE_PER_SLICE = 200

OVERALL_METRICS = ('auc', 'f1_micro', 'f1_macro', 'threshold')


class EvalMode(str, Enum):
    """Способ построения тестового набора"""

    STRATIFIED_UNIFORM = 'stratified_uniform'
    STRATIFIED_WEIGHTED = 'stratified_weighted'
    EXTERNAL_FILE = 'external_file'


def resolve_per_slice(n_entities: int, per_slice: Optional[int] = None) -> int:
    """10 примеров на отношение для графов с N_e < 15000, иначе 200"""
    if per_slice is not None:
        return per_slice
    return SMALL_PER_SLICE if n_entities < LARGE_GRAPH_ENTITIES else LARGE_PER_SLICE


@dataclass(frozen=True, eq=False)
class PreparedSplit:
    """Обучающий граф, валидационный и тестовый наборы одного повтора"""

    train: KnowledgeGraph
    validation: LabeledTriples
    test: LabeledTriples
    seed: int


def prepare_split(
    kg: KnowledgeGraph,
    mode: Union[EvalMode, str] = EvalMode.STRATIFIED_UNIFORM,
    per_slice: Optional[int] = None,
    seed: int = 42,
    external_positives: Optional[np.ndarray] = None,
    external_test: Optional[LabeledTriples] = None,
    exact: bool = False
) -> PreparedSplit:
    """
    Разбиение графа для одного повтора

    Тест маскируется из графа, затем из оставшегося графа вырезается
    валидационный набор по тому же рецепту 60/40.

    Args:
        kg: Полный граф
        mode: Способ построения теста
        per_slice: Примеров на отношение (по умолчанию по размеру графа)
        seed: Сид повтора
        external_positives: Позитивы для stratified_weighted
        external_test: Готовый размеченный набор для external_file
        exact: Вариант stratified_weighted с подвыборкой позитивов

    Returns:
        PreparedSplit
    """
    mode = EvalMode(mode)
    per_slice = resolve_per_slice(kg.n_entities, per_slice)

    if mode == EvalMode.STRATIFIED_UNIFORM:
        test, masked = make_test_set(kg, 'stratified_uniform', per_slice, seed)
    elif mode == EvalMode.STRATIFIED_WEIGHTED:
        if external_positives is None:
            raise ConfigError("stratified_weighted evaluation requires an external test file")
        test, masked = stratified_weighted_test_set(kg, external_positives, seed, exact=exact)
    else:
        if external_test is None:
            raise ConfigError("external_file evaluation requires a labeled test file")
        test = external_test
        positives = set(map(tuple, test.positives.tolist()))
        keep = np.array([tuple(t) not in positives for t in kg.triples.tolist()], dtype=bool)
        masked = kg.with_triples(kg.triples[keep])

    known = kg.triple_set() | set(map(tuple, test.positives.tolist()))
    validation, train = make_validation_set(masked, per_slice, seed, known=known)
    return PreparedSplit(train=train, validation=validation, test=test, seed=seed)


def _scores(f: FactorSet, items: LabeledTriples) -> np.ndarray:
    return score_triples(f, items.subjects, items.relations, items.objects)


def fit_on_split(
    split: PreparedSplit,
    kind: ModelKind,
    h: Hyperparams,
    cfg: FitConfig,
    encoding: Encoding = Encoding.TRANSITIVITY
) -> FactorSet:
    """Обучение на обучающем графе разбиения (C строится по нему же)"""
    x = build_tensor(split.train)
    c = compute_similarity(x, encoding) if kind.uses_similarity else None
    factors, _ = fit(kind, x, c, h, cfg.model_copy(update={'seed': split.seed}))
    return factors


def run_repeat(
    split: PreparedSplit,
    kind: ModelKind,
    h: Hyperparams,
    cfg: FitConfig,
    encoding: Encoding = Encoding.TRANSITIVITY,
    factors: Optional[FactorSet] = None
) -> EvalReport:
    """
    Один повтор протокола: обучение, порог на валидации, отчет на тесте

    Args:
        split: Разбиение повтора
        kind: Модель
        h: Гиперпараметры
        cfg: Параметры решателя
        encoding: Кодировка сходства
        factors: Готовые факторы вместо обучения

    Returns:
        EvalReport
    """
    if factors is None:
        factors = fit_on_split(split, kind, h, cfg, encoding)
    elif factors.n_entities != split.train.n_entities or factors.n_relations != split.train.n_relations:
        raise DatasetError(
            f"Factors (N_e={factors.n_entities}, N_r={factors.n_relations}) do not match dataset "
            f"(N_e={split.train.n_entities}, N_r={split.train.n_relations})"
        )

    threshold = tune_threshold(_scores(factors, split.validation), split.validation.labels)
    report = classify_and_report(factors, split.test, threshold, split.train.relation_labels)
    MetricsService.record_auc(kind.value, report.auc)

    logger.info(
        f"Repeat seed={split.seed}: AUC={report.auc:.4f}, micro-F1={report.f1_micro:.4f}, "
        f"macro-F1={report.f1_macro:.4f}, threshold={report.threshold:.4g}"
    )
    return report


@dataclass
class EvalSummary:
    """Отчеты всех повторов и их агрегаты"""

    model: ModelKind
    seeds: List[int]
    reports: List[EvalReport] = field(default_factory=list)

    def overall_frame(self) -> pd.DataFrame:
        """Строки metric, mean, std (выборочное, 0 для одного повтора)"""
        values = pd.DataFrame([report.overall() for report in self.reports], columns=list(OVERALL_METRICS))
        std = values.std(ddof=1).fillna(0.0) if len(values) > 1 else values.mean() * 0.0
        return pd.DataFrame({
            'metric': list(OVERALL_METRICS),
            'mean': values.mean().to_numpy(),
            'std': std.to_numpy()
        })

    def per_relation_frame(self) -> pd.DataFrame:
        frames = []
        for seed, report in zip(self.seeds, self.reports):
            frame = report.per_relation_frame()
            frame.insert(0, 'seed', seed)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()

    def mean(self, metric: str) -> float:
        return float(np.mean([report.overall()[metric] for report in self.reports]))


@measure_time('evaluate')
def evaluate_model(
    kg: KnowledgeGraph,
    kind: Union[ModelKind, str],
    h: Hyperparams,
    cfg: Optional[FitConfig] = None,
    encoding: Union[Encoding, str] = Encoding.TRANSITIVITY,
    mode: Union[EvalMode, str] = EvalMode.STRATIFIED_UNIFORM,
    per_slice: Optional[int] = None,
    repeats: int = 5,
    seed: int = 42,
    threads: int = 1,
    external_positives: Optional[np.ndarray] = None,
    external_test: Optional[LabeledTriples] = None,
    exact: bool = False,
    factors: Optional[FactorSet] = None
) -> EvalSummary:
    """
    Повторная оценка модели; повтор r использует сид seed + r

    Повторы независимы и могут выполняться параллельно; порядок отчетов
    совпадает с порядком повторов.

    Args:
        kg: Полный граф
        kind: Модель
        h: Гиперпараметры
        cfg: Параметры решателя
        encoding: Кодировка сходства
        mode: Способ построения теста
        per_slice: Примеров на отношение
        repeats: Число повторов
        seed: Корневой сид
        threads: Число потоков
        external_positives: Позитивы для stratified_weighted
        external_test: Размеченный набор для external_file
        exact: Вариант stratified_weighted
        factors: Готовые факторы для повтора 0 (остальные обучаются заново)

    Returns:
        EvalSummary
    """
    kind = ModelKind(kind)
    encoding = Encoding(encoding)
    cfg = cfg or FitConfig()
    if repeats < 1:
        raise ConfigError(f"repeats must be at least 1, got {repeats}")

    seeds = [seed + r for r in range(repeats)]

    def one(index: int) -> EvalReport:
        split = prepare_split(
            kg, mode, per_slice, seeds[index],
            external_positives=external_positives,
            external_test=external_test,
            exact=exact
        )
        return run_repeat(split, kind, h, cfg, encoding, factors if index == 0 else None)

    logger.info(f"Evaluation started: model={kind.value}, mode={EvalMode(mode).value}, repeats={repeats}")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        reports = list(pool.map(one, range(repeats)))

    summary = EvalSummary(model=kind, seeds=seeds, reports=reports)
    logger.info(
        f"Evaluation finished: model={kind.value}, mean AUC={summary.mean('auc'):.4f}, "
        f"mean micro-F1={summary.mean('f1_micro'):.4f}"
    )
    return summary


def export_report(summary: EvalSummary, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Запись overall.csv, per_relation.csv и summary.txt

    Returns:
        Словарь имя -> путь
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    paths = {
        'overall': out_dir / 'overall.csv',
        'per_relation': out_dir / 'per_relation.csv',
        'summary': out_dir / 'summary.txt'
    }
    overall = summary.overall_frame()
    overall.to_csv(paths['overall'], index=False, float_format='%.6f')
    summary.per_relation_frame().to_csv(paths['per_relation'], index=False, float_format='%.6f')

    lines = [f"model: {summary.model.value}", f"repeats: {len(summary.reports)}"]
    for row in overall.itertuples(index=False):
        lines.append(f"{row.metric}: {row.mean:.4f} +/- {row.std:.4f}")
    paths['summary'].write_text('\n'.join(lines) + '\n', encoding='utf-8')

    logger.info(f"Evaluation report written: {out_dir}")
    return paths


@measure_time('density_sweep')
def density_sweep(
    kg: KnowledgeGraph,
    fractions: Sequence[float],
    kinds: Union[ModelKind, str, Sequence[Union[ModelKind, str]]],
    h: Hyperparams,
    cfg: Optional[FitConfig] = None,
    encoding: Union[Encoding, str] = Encoding.TRANSITIVITY,
    per_slice: Optional[int] = None,
    seed: int = 42,
    threads: int = 1
) -> pd.DataFrame:
    """
    AUC моделей при уменьшении доли субъектов графа

    Для каждой доли: subsample_subjects, тестовый и валидационный наборы по
    подграфу, обучение каждой модели, AUC на тесте. Доля 1.0 совпадает с
    одиночным запуском evaluate_model с тем же сидом.

    Args:
        kg: Полный граф
        fractions: Доли субъектов в (0, 1]
        kinds: Модель или список моделей
        h: Гиперпараметры
        cfg: Параметры решателя
        encoding: Кодировка сходства
        per_slice: Примеров на отношение
        seed: Сид
        threads: Число потоков (по долям)

    Returns:
        DataFrame: fraction, n_facts, graph_density, auc_<model>...
    """
    if isinstance(kinds, (str, ModelKind)):
        kinds = [kinds]
    kinds = [ModelKind(kind) for kind in kinds]
    encoding = Encoding(encoding)
    cfg = cfg or FitConfig()

    for fraction in fractions:
        if not 0.0 < fraction <= 1.0:
            raise DatasetError(f"Subject fraction must lie in (0, 1], got {fraction}")

    def row(fraction: float) -> dict:
        sub = subsample_subjects(kg, fraction, seed)
        split = prepare_split(sub, EvalMode.STRATIFIED_UNIFORM, resolve_per_slice(kg.n_entities, per_slice), seed)
        result = {
            'fraction': fraction,
            'n_facts': sub.n_triples,
            'graph_density': sub.n_triples / float(sub.n_entities ** 2)
        }
        for kind in kinds:
            factors = fit_on_split(split, kind, h, cfg, encoding)
            result[f'auc_{kind.value}'] = auc(_scores(factors, split.test), split.test.labels)
        logger.info(f"Density sweep fraction={fraction}: {result}")
        return result

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(row, fractions))

    return pd.DataFrame(rows, columns=['fraction', 'n_facts', 'graph_density'] + [f'auc_{k.value}' for k in kinds])


def density_to_csv(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format='%.6f')
    logger.info(f"Density table written: {path} ({len(table)} rows)")
    return path
