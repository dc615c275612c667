"""
Модуль загрузки графов знаний (Ingestion)
"""
from .ingestion_service import (
    Dataset,
    IngestionReport,
    IngestionService,
    KnowledgeGraph,
    LiteralPolicy,
    ingest_triples,
    ingestion_report,
    subsample_subjects,
    tag_literal,
    write_triples,
)
from .tensor import DatasetStats, SparseTensor3, build_tensor, stats

__all__ = [
    'Dataset',
    'DatasetStats',
    'IngestionReport',
    'IngestionService',
    'KnowledgeGraph',
    'LiteralPolicy',
    'SparseTensor3',
    'build_tensor',
    'ingest_triples',
    'ingestion_report',
    'stats',
    'subsample_subjects',
    'tag_literal',
    'write_triples',
]
