"""
Модуль обучения: модели, проходы ALS, решатель и экспорт факторов
"""
from .linalg import KronEigenSystem, kron_ridge_solve, solve_right
from .models import (
    CouplingMode,
    FactorKind,
    FactorSet,
    Hyperparams,
    ModelKind,
    ObjectiveBreakdown,
    init_factors,
    merge_entity_factors,
    objective_value,
    reconstruction_loss,
    score_triple,
    score_triples,
)
from .persistence import (
    format_manifest,
    load_factors,
    manifest_hash,
    read_manifest,
    save_factors,
    trace_to_csv,
    write_manifest,
)
from .sweeps import (
    SWEEPS,
    model1_sweep,
    model2_sweep,
    model3_sweep,
    nnrescal_sweep,
    quadreg_sweep,
    rescal_sweep,
    run_sweep,
    update_entity_left,
    update_entity_quadratic,
    update_entity_right,
    update_multipliers,
    update_relations,
)
from .training_service import FitConfig, SolverTrace, SweepRecord, TerminationReason, delta, fit

__all__ = [
    'CouplingMode',
    'FactorKind',
    'FactorSet',
    'FitConfig',
    'Hyperparams',
    'KronEigenSystem',
    'ModelKind',
    'ObjectiveBreakdown',
    'SWEEPS',
    'SolverTrace',
    'SweepRecord',
    'TerminationReason',
    'delta',
    'fit',
    'format_manifest',
    'init_factors',
    'kron_ridge_solve',
    'load_factors',
    'manifest_hash',
    'merge_entity_factors',
    'model1_sweep',
    'model2_sweep',
    'model3_sweep',
    'nnrescal_sweep',
    'objective_value',
    'quadreg_sweep',
    'read_manifest',
    'reconstruction_loss',
    'rescal_sweep',
    'run_sweep',
    'save_factors',
    'score_triple',
    'score_triples',
    'solve_right',
    'trace_to_csv',
    'update_entity_left',
    'update_entity_quadratic',
    'update_entity_right',
    'update_multipliers',
    'update_relations',
    'write_manifest',
]
