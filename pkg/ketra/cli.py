"""
Командная строка ketra: stats, similarity, train, evaluate, sweep, search
"""
import sys
from dataclasses import dataclass
from functools import wraps
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import click
import numpy as np
import pandas as pd
from loguru import logger
from pydantic import ValidationError

from ketra import __version__
from ketra.config import KetraSettings, RunConfig, load_run_config, plain_value
from ketra.evaluation import (
    EvalMode,
    density_sweep,
    density_to_csv,
    evaluate_model,
    export_report,
    load_labeled_triples,
    load_positive_triples,
    prepare_split,
)
from ketra.exceptions import ConfigError, KetraError, NumericalError
from ketra.ingestion import IngestionService, KnowledgeGraph, LiteralPolicy, build_tensor, stats
from ketra.monitoring import ExperimentTracker, MetricsService
from ketra.similarity import Encoding, compute_similarity, similarity_to_csv
from ketra.training import (
    ModelKind,
    fit,
    format_manifest,
    load_factors,
    manifest_hash,
    save_factors,
    trace_to_csv,
    write_manifest,
)
from ketra.training.search import METRICS, hyper_search

METRICS_FILE = 'metrics.prom'


@dataclass(frozen=True)
class CliContext:
    """Глобальные параметры команды"""

    settings: KetraSettings
    seed: Optional[int]
    threads: int


def configure_logging(level: str, log_file: Optional[str] = None) -> None:
    """
    Настройка логирования: stderr и, при заданном файле, ротируемый файловый лог

    Args:
        level: Уровень stderr
        log_file: Путь к файловому логу
    """
    logger.remove()
    logger.add(sys.stderr, level=level.upper())
    if log_file:
        logger.add(
            log_file,
            rotation="500 MB",
            retention="10 days",
            level="INFO"
        )


def handle_errors(command: Callable) -> Callable:
    """Перевод исключений пакета в коды выхода"""
    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except KetraError as e:
            logger.error(f"{type(e).__name__}: {e}")
            raise SystemExit(e.exit_code)
        except ValidationError as e:
            logger.error(f"Invalid value: {e}")
            raise SystemExit(2)
        except np.linalg.LinAlgError as e:
            logger.error(f"NumericalError: {e}")
            raise SystemExit(NumericalError.exit_code)

    return wrapper


def _parse_assignments(assignments: Tuple[str, ...]) -> Dict[str, str]:
    overrides = {}
    for item in assignments:
        key, sep, value = item.partition('=')
        if not sep or not key.strip():
            raise ConfigError(f"Expected key=value override, got '{item}'")
        overrides[key.strip()] = value.strip()
    return overrides


def _run_config(
    config: Optional[str],
    options: Dict[str, Optional[object]],
    assignments: Tuple[str, ...] = ()
) -> RunConfig:
    """Файл запуска плюс переопределения из --set и именованных флагов"""
    overrides = _parse_assignments(assignments)
    overrides.update({key: plain_value(value) for key, value in options.items() if value is not None})
    return load_run_config(config, overrides)


def _root_seed(ctx: CliContext, cfg: RunConfig) -> int:
    # --seed важнее файла запуска, файл важнее окружения
    if ctx.seed is not None:
        return ctx.seed
    if cfg.seed is not None:
        return cfg.seed
    return ctx.settings.seed


def _load_graph(cfg: RunConfig) -> KnowledgeGraph:
    return IngestionService(cfg.model.literal_policy).load_dataset(cfg.dataset_dir).kg


def _external_inputs(cfg: RunConfig, kg: KnowledgeGraph) -> Dict[str, object]:
    """Внешние тестовые данные по режиму оценки"""
    mode = cfg.eval.mode
    if mode == EvalMode.STRATIFIED_WEIGHTED:
        return {'external_positives': load_positive_triples(cfg.eval.test_file, kg), 'exact': cfg.eval.exact}
    if mode == EvalMode.EXTERNAL_FILE:
        return {'external_test': load_labeled_triples(cfg.eval.test_file, kg)}
    return {}


def _finish(cfg: RunConfig, entries: Dict[str, object]) -> None:
    write_manifest(entries, cfg.output_dir)
    MetricsService.export(Path(cfg.output_dir) / METRICS_FILE)
    logger.info(f"Run manifest hash: {manifest_hash(entries)}")


def _config_options(func: Callable) -> Callable:
    """Общие опции команд, работающих с файлом запуска"""
    options = [
        click.option('--config', 'config', type=click.Path(exists=True, dir_okay=False), default=None,
                     help='Файл запуска key=value'),
        click.option('--dataset-dir', type=click.Path(file_okay=False), default=None, help='Директория набора данных'),
        click.option('--output-dir', type=click.Path(file_okay=False), default=None, help='Директория результатов'),
        click.option('--model', 'model_kind', type=click.Choice([k.value for k in ModelKind]), default=None,
                     help='Модель'),
        click.option('--encoding', type=click.Choice([e.value for e in Encoding]), default=None,
                     help='Кодировка сходства'),
        click.option('--rank', type=int, default=None, help='Ранг p'),
        click.option('--max-iter', type=int, default=None, help='Максимум проходов'),
        click.option('--set', 'assignments', multiple=True, metavar='KEY=VALUE',
                     help='Переопределение ключа файла запуска (например fit.tol=1e-5)'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _named_overrides(dataset_dir, output_dir, model_kind, encoding, rank, max_iter) -> Dict[str, Optional[object]]:
    return {
        'dataset_dir': dataset_dir,
        'output_dir': output_dir,
        'model.kind': model_kind,
        'model.encoding': encoding,
        'hyperparams.rank': rank,
        'fit.max_iter': max_iter,
    }


@click.group()
@click.version_option(__version__, prog_name='ketra')
@click.option('--seed', type=int, default=None, help='Корневой сид (по умолчанию 42)')
@click.option('--threads', type=click.IntRange(min=1), default=None, help='Число потоков (по умолчанию все ядра)')
@click.option('--log-level', default=None, help='Уровень логирования stderr')
@click.pass_context
def main(ctx: click.Context, seed: Optional[int], threads: Optional[int], log_level: Optional[str]):
    """Вложения графов знаний тензорной факторизацией со сходством отношений"""
    settings = KetraSettings()
    configure_logging(log_level or settings.log_level, settings.log_file)
    ctx.obj = CliContext(
        settings=settings,
        seed=seed,
        threads=threads or settings.resolved_threads
    )


@main.command('stats')
@click.argument('dataset_dir', type=click.Path(file_okay=False))
@click.option('--format', 'output_format', type=click.Choice(['text', 'csv']), default='text', help='Формат вывода')
@click.option('--literal-policy', type=click.Choice([p.value for p in LiteralPolicy]), default=LiteralPolicy.KEEP.value,
              help='Обработка литеральных объектов')
@handle_errors
def cmd_stats(dataset_dir: str, output_format: str, literal_policy: str):
    """Число сущностей, отношений, фактов и плотность графа"""
    dataset = IngestionService(literal_policy).load_dataset(dataset_dir)
    summary = stats(build_tensor(dataset.kg))

    if output_format == 'csv':
        click.echo(pd.DataFrame([summary.as_dict()]).to_csv(index=False, float_format='%.5f'), nl=False)
        return

    click.echo(f"entities: {summary.n_entities}")
    click.echo(f"relations: {summary.n_relations}")
    click.echo(f"facts: {summary.n_facts}")
    click.echo(f"average degree: {summary.avg_degree:.4f}")
    click.echo(f"graph density: {summary.graph_density:.5f}")


@main.command('similarity')
@click.argument('dataset_dir', type=click.Path(file_okay=False))
@click.option('--encoding', type=click.Choice([e.value for e in Encoding]), required=True, help='Кодировка сходства')
@click.option('--out', 'out', type=click.Path(dir_okay=False), required=True, help='CSV файл матрицы')
@click.option('--literal-policy', type=click.Choice([p.value for p in LiteralPolicy]), default=LiteralPolicy.KEEP.value,
              help='Обработка литеральных объектов')
@handle_errors
def cmd_similarity(dataset_dir: str, encoding: str, out: str, literal_policy: str):
    """Матрица сходства отношений в CSV с метками"""
    kg = IngestionService(literal_policy).load_dataset(dataset_dir).kg
    sim = compute_similarity(build_tensor(kg), encoding, kg.relation_labels)
    similarity_to_csv(sim, out, kg.relation_labels)
    click.echo(f"{out}: {sim.n_relations}x{sim.n_relations}, encoding={encoding}")


@main.command('train')
@_config_options
@click.pass_obj
@handle_errors
def cmd_train(ctx: CliContext, config, dataset_dir, output_dir, model_kind, encoding, rank, max_iter, assignments):
    """Обучение модели на обучающем графе разбиения; факторы, трасса и манифест"""
    cfg = _run_config(config, _named_overrides(dataset_dir, output_dir, model_kind, encoding, rank, max_iter),
                      assignments)
    seed = _root_seed(ctx, cfg)
    kind = cfg.model.kind
    kg = _load_graph(cfg)

    split = prepare_split(kg, cfg.eval.mode, cfg.eval.per_slice, seed, **_external_inputs(cfg, kg))
    x = build_tensor(split.train)
    c = compute_similarity(x, cfg.model.encoding) if kind.uses_similarity else None

    tracker = ExperimentTracker(ctx.settings.tracking_uri, ctx.settings.experiment_name)
    entries = cfg.manifest_entries(seed)
    entries['hyperparams.rank'] = cfg.hyperparams.resolved_rank(x.n_relations)

    out_dir = Path(cfg.output_dir)
    with tracker.start_run(run_name=f"train-{kind.value}"):
        tracker.log_params(entries)
        factors, trace = fit(kind, x, c, cfg.hyperparams, cfg.fit_config(seed), tracker=tracker)

        entries.update({'sweeps': len(trace), 'termination': trace.termination.value})
        factor_dir = save_factors(factors, out_dir / 'factors', entries)
        trace_path = trace_to_csv(trace, out_dir / 'trace.csv')
        tracker.log_artifact(factor_dir)
        tracker.log_artifact(trace_path)

    _finish(cfg, entries)
    click.echo(f"{kind.value}: {len(trace)} sweeps, {trace.termination.value}, objective {trace.objectives[-1]:.6e}")


@main.command('evaluate')
@_config_options
@click.option('--factors', 'factors_dir', type=click.Path(exists=True, file_okay=False), default=None,
              help='Каталог факторов команды train (используются в первом повторе)')
@click.option('--test-file', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Размеченный тестовый файл (s, r, o, label)')
@click.option('--repeats', type=click.IntRange(min=1), default=None, help='Число повторов')
@click.pass_obj
@handle_errors
def cmd_evaluate(ctx: CliContext, config, dataset_dir, output_dir, model_kind, encoding, rank, max_iter, assignments,
                 factors_dir, test_file, repeats):
    """Протокол оценки: AUC, micro-F1 и macro-F1 по повторам"""
    options = _named_overrides(dataset_dir, output_dir, model_kind, encoding, rank, max_iter)
    options['eval.repeats'] = repeats
    if test_file is not None:
        options['eval.test_file'] = str(Path(test_file).resolve())
    cfg = _run_config(config, options, assignments)
    if test_file is not None and cfg.eval.mode == EvalMode.STRATIFIED_UNIFORM:
        cfg = cfg.model_copy(update={'eval': cfg.eval.model_copy(update={'mode': EvalMode.EXTERNAL_FILE})})

    seed = _root_seed(ctx, cfg)
    kind = cfg.model.kind
    kg = _load_graph(cfg)

    factors = None
    if factors_dir is not None:
        factors, _ = load_factors(factors_dir)
        if factors.model != kind:
            raise ConfigError(f"Factors in {factors_dir} belong to {factors.model.value}, config asks for {kind.value}")

    tracker = ExperimentTracker(ctx.settings.tracking_uri, ctx.settings.experiment_name)
    with tracker.start_run(run_name=f"evaluate-{kind.value}"):
        summary = evaluate_model(
            kg, kind, cfg.hyperparams, cfg.fit_config(seed),
            encoding=cfg.model.encoding or Encoding.TRANSITIVITY,
            mode=cfg.eval.mode,
            per_slice=cfg.eval.per_slice,
            repeats=cfg.eval.repeats,
            seed=seed,
            threads=ctx.threads,
            factors=factors,
            **_external_inputs(cfg, kg)
        )
        paths = export_report(summary, cfg.output_dir)
        tracker.log_metrics({metric: summary.mean(metric) for metric in ('auc', 'f1_micro', 'f1_macro')})
        tracker.log_artifact(paths['overall'])

    entries = cfg.manifest_entries(seed)
    entries['factors'] = str(factors_dir) if factors_dir else ''
    _finish(cfg, entries)
    click.echo(paths['summary'].read_text(encoding='utf-8'), nl=False)


def _parse_fractions(raw: str) -> List[float]:
    try:
        return [float(item) for item in raw.split(',') if item.strip()]
    except ValueError as e:
        raise ConfigError(f"Invalid --fractions value '{raw}': {e}") from e


@main.command('sweep')
@_config_options
@click.option('--fractions', default='0.25,0.5,1.0', show_default=True, help='Доли субъектов через запятую')
@click.option('--models', default=None, help='Модели через запятую (по умолчанию model.kind)')
@click.pass_obj
@handle_errors
def cmd_sweep(ctx: CliContext, config, dataset_dir, output_dir, model_kind, encoding, rank, max_iter, assignments,
              fractions, models):
    """AUC моделей при уменьшении доли субъектов (density.csv)"""
    cfg = _run_config(config, _named_overrides(dataset_dir, output_dir, model_kind, encoding, rank, max_iter),
                      assignments)
    seed = _root_seed(ctx, cfg)

    try:
        kinds = [ModelKind(name.strip()) for name in models.split(',')] if models else [cfg.model.kind]
    except ValueError as e:
        raise ConfigError(f"Invalid --models value '{models}': {e}") from e
    if any(kind.uses_similarity for kind in kinds) and cfg.model.encoding is None:
        raise ConfigError("Similarity-aware models in --models require model.encoding")

    table = density_sweep(
        _load_graph(cfg), _parse_fractions(fractions), kinds, cfg.hyperparams, cfg.fit_config(seed),
        encoding=cfg.model.encoding or Encoding.TRANSITIVITY,
        per_slice=cfg.eval.per_slice,
        seed=seed,
        threads=ctx.threads
    )
    density_to_csv(table, Path(cfg.output_dir) / 'density.csv')

    entries = cfg.manifest_entries(seed)
    entries.update({'fractions': fractions, 'models': ','.join(kind.value for kind in kinds)})
    _finish(cfg, entries)
    click.echo(table.to_string(index=False))


@main.command('search')
@_config_options
@click.option('--metric', type=click.Choice(list(METRICS)), default='auc', show_default=True,
              help='Валидационная метрика')
@click.pass_obj
@handle_errors
def cmd_search(ctx: CliContext, config, dataset_dir, output_dir, model_kind, encoding, rank, max_iter, assignments,
               metric):
    """Покоординатный подбор гиперпараметров по валидационному набору"""
    cfg = _run_config(config, _named_overrides(dataset_dir, output_dir, model_kind, encoding, rank, max_iter),
                      assignments)
    seed = _root_seed(ctx, cfg)
    kind = cfg.model.kind
    kg = _load_graph(cfg)

    split = prepare_split(kg, cfg.eval.mode, cfg.eval.per_slice, seed, **_external_inputs(cfg, kg))
    x = build_tensor(split.train)
    c = compute_similarity(x, cfg.model.encoding) if kind.uses_similarity else None

    result = hyper_search(
        kind, x, c, split.validation,
        metric=metric,
        base=cfg.hyperparams,
        cfg=cfg.fit_config(seed),
        threads=ctx.threads,
        return_result=True
    )

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best = {f"hyperparams.{key}": plain_value(value) for key, value in result.best.model_dump().items()}
    (out_dir / 'best_hyperparams.txt').write_text(format_manifest(best), encoding='utf-8')
    pd.DataFrame(
        [{**trial.params, 'metric': trial.metric, 'error': trial.error or ''} for trial in result.trials]
    ).to_csv(out_dir / 'search_trials.csv', index=False)

    entries = cfg.manifest_entries(seed)
    entries.update({'search.metric': metric, 'search.best_metric': f"{result.best_metric:.6f}"})
    _finish(cfg, entries)
    click.echo(format_manifest(best), nl=False)
    click.echo(f"{metric}: {result.best_metric:.4f}")


if __name__ == '__main__':
    main()
