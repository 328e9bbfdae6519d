"""Cosine comparison of embeddings.

Scores are similarities: higher means more alike, and the kin decision
downstream is ``score >= threshold``. Zero vectors are treated as corrupt
input and rejected rather than scored.
"""
from __future__ import annotations

import numpy as np

from .embedding_store import DatasetIndex, EmbeddingMatrix
from .errors import DimensionMismatchError, UnknownImageIdError, ZeroVectorError


def l2_normalize(x) -> np.ndarray:
    """Scale a vector to unit Euclidean norm, preserving direction."""
    v = np.asarray(x, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ZeroVectorError("cannot normalize a zero vector")
    return v / norm


def cosine_similarity(x, y) -> float:
    u = np.asarray(x, dtype=np.float64)
    v = np.asarray(y, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatchError(f"shapes {u.shape} and {v.shape} differ")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine similarity of a zero vector is undefined")
    return float(np.dot(u, v) / (nu * nv))


def score_pairs(pairs, index: DatasetIndex, matrix: EmbeddingMatrix):
    """Cosine score for each pair, in input order.

    Returns a list of ``(pair, score)``. Unknown image ids are an error, not
    a skipped row.
    """
    scored = []
    for pair in pairs.pairs:
        for image_id in (pair.image_a, pair.image_b):
            if image_id not in index.image_lookup:
                raise UnknownImageIdError(f"unknown image id {image_id!r}")
        row_a = index.image_lookup[pair.image_a].row
        row_b = index.image_lookup[pair.image_b].row
        scored.append((pair, cosine_similarity(matrix.row(row_a), matrix.row(row_b))))
    return scored
