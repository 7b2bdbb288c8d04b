"""Unit-sphere normalization and squared-Euclidean distance matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BatchTooSmall, ShapeError
from .tensor import as_dense

NORM_EPS = 1e-12


@dataclass(frozen=True)
class EmbeddingBatch:
    """``b x d`` embedding rows with their class labels."""

    vectors: np.ndarray
    labels: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        v = as_dense(self.vectors, name="vectors")
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ShapeError(f"expected a non-empty b x d matrix, got {v.shape}")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != v.shape[0]:
            raise ShapeError("labels length must equal the number of rows")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.vectors.shape[0]


def l2_normalize(vectors, epsilon: float = NORM_EPS):
    """Divide each row by ``max(norm, epsilon)``.

    Returns ``(normalized, collapse_count)`` where ``collapse_count`` is the
    number of rows whose norm fell below ``epsilon``. Such rows stay (near)
    zero instead of raising, so a collapsing model can be observed.

    Accepts either a plain array or an :class:`EmbeddingBatch`; the first
    return value has the same type as the input.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if isinstance(vectors, EmbeddingBatch):
        out, count = l2_normalize(vectors.vectors, epsilon)
        return EmbeddingBatch(out, vectors.labels, normalized=True), count
    v = as_dense(vectors, name="vectors")
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    collapse_count = int(np.count_nonzero(norms < epsilon))
    return v / np.maximum(norms, epsilon), collapse_count


def pairwise_sq_distances(vectors) -> np.ndarray:
    """``D[i, j] = ||v_i - v_j||^2``, exactly symmetric with a zero diagonal."""
    if isinstance(vectors, EmbeddingBatch):
        vectors = vectors.vectors
    v = as_dense(vectors, name="vectors")
    if v.ndim != 2:
        raise ShapeError(f"expected a b x d matrix, got {v.shape}")
    b = v.shape[0]
    if b < 2:
        raise BatchTooSmall(f"need at least 2 rows, got {b}")
    sq = np.einsum("ij,ij->i", v, v)
    d = sq[:, None] + sq[None, :] - 2.0 * (v @ v.T)
    np.maximum(d, 0.0, out=d)
    # mirror the upper triangle so symmetry does not depend on BLAS rounding
    upper = np.triu(d, k=1)
    return upper + upper.T

