"""
Модуль сходства отношений
"""
from .similarity_service import (
    Encoding,
    RelationProfile,
    SimilarityMatrix,
    compute_similarity,
    laplacian_sqrt,
    pairwise_slice_distances,
    relation_profile,
    similarity_from_csv,
    similarity_to_csv,
    weighted_slice_distance,
)

__all__ = [
    'Encoding',
    'RelationProfile',
    'SimilarityMatrix',
    'compute_similarity',
    'laplacian_sqrt',
    'pairwise_slice_distances',
    'relation_profile',
    'similarity_from_csv',
    'similarity_to_csv',
    'weighted_slice_distance',
]
