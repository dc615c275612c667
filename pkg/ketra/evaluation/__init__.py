"""
Модуль оценки предсказания фактов
"""
from .evaluation_service import (
    EvalMode,
    EvalSummary,
    PreparedSplit,
    density_sweep,
    density_to_csv,
    evaluate_model,
    export_report,
    fit_on_split,
    prepare_split,
    resolve_per_slice,
    run_repeat,
)
from .metrics import EvalReport, RelationScore, auc, classify_and_report, report_from_scores, tune_threshold
from .test_sets import (
    LabeledTriples,
    Provenance,
    corrupt_objects,
    load_labeled_triples,
    load_positive_triples,
    make_test_set,
    make_validation_set,
    save_labeled_triples,
    stratified_weighted_test_set,
)

__all__ = [
    'EvalMode',
    'EvalReport',
    'EvalSummary',
    'LabeledTriples',
    'PreparedSplit',
    'Provenance',
    'RelationScore',
    'auc',
    'classify_and_report',
    'corrupt_objects',
    'density_sweep',
    'density_to_csv',
    'evaluate_model',
    'export_report',
    'fit_on_split',
    'load_labeled_triples',
    'load_positive_triples',
    'make_test_set',
    'make_validation_set',
    'prepare_split',
    'report_from_scores',
    'resolve_per_slice',
    'run_repeat',
    'save_labeled_triples',
    'stratified_weighted_test_set',
    'tune_threshold',
]
