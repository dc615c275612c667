"""
Метрики предсказания фактов: AUC, порог, F1 по отношениям
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata
from sklearn.metrics import precision_recall_curve, precision_recall_fscore_support

from ketra.exceptions import DatasetError, ShapeError
from ketra.training import FactorSet, score_triples
from .test_sets import LabeledTriples

F1_TIE_TOLERANCE = 1e-12


def _validated(scores: Sequence[float], labels: Sequence[int]):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if scores.shape != labels.shape:
        raise ShapeError(f"{scores.size} scores but {labels.size} labels")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise DatasetError("Both positive and negative labels are required")
    return scores, labels


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    AUC как статистика Манна-Уитни со средними рангами

    Вероятность того, что случайный позитив оценен выше случайного негатива,
    ничьи считаются с весом 1/2.

    Raises:
        DatasetError: в метках только один класс
    """
    scores, labels = _validated(scores, labels)
    ranks = rankdata(scores)
    positive = labels == 1
    n_pos = int(positive.sum())
    n_neg = labels.size - n_pos
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def tune_threshold(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Глобальный порог, максимизирующий micro-F1

    Кандидаты: -inf, середины между соседними различными оценками и +inf;
    предсказание - score > порог. При равенстве F1 выбирается больший порог.

    Args:
        scores: Оценки (валидационный набор)
        labels: Метки 0/1

    Returns:
        Порог
    """
    scores, labels = _validated(scores, labels)
    distinct = np.unique(scores)

    precision, recall, thresholds = precision_recall_curve(labels, scores)
    with np.errstate(divide='ignore', invalid='ignore'):
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)

    # порог t из кривой означает score >= t, то есть score > середины перед t
    candidates = []
    for t in thresholds:
        position = int(np.searchsorted(distinct, t))
        candidates.append(-np.inf if position == 0 else (distinct[position - 1] + distinct[position]) / 2.0)
    # последняя точка кривой (recall 0) - все предсказания отрицательные
    candidates.append(np.inf)
    candidates = np.asarray(candidates)

    best = f1.max()
    tied = np.flatnonzero(f1 >= best - F1_TIE_TOLERANCE)
    return float(candidates[tied].max())


@dataclass(frozen=True)
class RelationScore:
    """Точность, полнота и F1 одного отношения"""

    relation: int
    label: str
    precision: float
    recall: float
    f1: float
    support: int
    n_items: int


@dataclass(frozen=True)
class EvalReport:
    """Отчет оценки на тестовом наборе"""

    auc: float
    threshold: float
    f1_micro: float
    f1_macro: float
    per_relation: List[RelationScore] = field(default_factory=list)

    def overall(self) -> Dict[str, float]:
        return {'auc': self.auc, 'f1_micro': self.f1_micro, 'f1_macro': self.f1_macro, 'threshold': self.threshold}

    def per_relation_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [vars(score) for score in self.per_relation],
            columns=['relation', 'label', 'precision', 'recall', 'f1', 'support', 'n_items']
        )


def _positive_class_scores(labels: np.ndarray, predictions: np.ndarray):
    precision, recall, f1, support = precision_recall_fscore_support(
        labels, predictions, labels=[1], average=None, zero_division=0
    )
    return float(precision[0]), float(recall[0]), float(f1[0]), int(support[0])


def report_from_scores(
    scores: Sequence[float],
    labels: Sequence[int],
    relations: Sequence[int],
    threshold: float,
    relation_labels: Optional[Sequence[str]] = None
) -> EvalReport:
    """
    Отчет по готовым оценкам

    micro-F1 считается по объединенной матрице ошибок, macro-F1 - среднее F1
    по отношениям с ненулевым числом позитивов. При нулевом знаменателе
    P, R и F1 равны 0.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    relations = np.asarray(relations, dtype=np.int64).ravel()
    if not (scores.shape == labels.shape == relations.shape):
        raise ShapeError("Scores, labels and relations must have equal length")

    predictions = (scores > threshold).astype(np.int64)
    _, _, f1_micro, _ = _positive_class_scores(labels, predictions)

    per_relation = []
    for k in np.unique(relations):
        mask = relations == k
        precision, recall, f1, support = _positive_class_scores(labels[mask], predictions[mask])
        per_relation.append(RelationScore(
            relation=int(k),
            label=str(relation_labels[k]) if relation_labels is not None else str(k),
            precision=precision,
            recall=recall,
            f1=f1,
            support=support,
            n_items=int(mask.sum())
        ))

    supported = [score.f1 for score in per_relation if score.support > 0]
    f1_macro = float(np.mean(supported)) if supported else 0.0

    n_pos = int(labels.sum())
    auc_value = auc(scores, labels) if 0 < n_pos < labels.size else float('nan')

    return EvalReport(
        auc=auc_value,
        threshold=float(threshold),
        f1_micro=f1_micro,
        f1_macro=f1_macro,
        per_relation=per_relation
    )


def classify_and_report(
    f: FactorSet,
    test: LabeledTriples,
    threshold: float,
    relation_labels: Optional[Sequence[str]] = None
) -> EvalReport:
    """
    Классификация тестовых троек по порогу и расчет метрик

    Args:
        f: Обученные факторы
        test: Тестовый набор
        threshold: Глобальный порог (предсказание score > threshold)
        relation_labels: Метки отношений для отчета

    Returns:
        EvalReport
    """
    scores = score_triples(f, test.subjects, test.relations, test.objects)
    return report_from_scores(scores, test.labels, test.relations, threshold, relation_labels)
