"""Embedding and classification metrics: Recall@K, k-means + NMI, micro/macro accuracy."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, KTooLarge, ShapeError
from .geometry import pairwise_sq_distances
from .tensor import as_dense, make_rng


@dataclass
class Clustering:
    assignments: np.ndarray
    k: int
    centers: np.ndarray | None = None
    sse_history: list = field(default_factory=list)
    n_iter: int = 0

    def __post_init__(self):
        self.assignments = np.asarray(self.assignments, dtype=np.int64).reshape(-1)
        if self.assignments.size and (self.assignments.min() < 0 or self.assignments.max() >= self.k):
            raise ValueError("assignments must lie in [0, k)")

    @classmethod
    def from_labels(cls, labels) -> "Clustering":
        """Relabel arbitrary class ids to ``0..k-1`` in order of first appearance."""
        labels = np.asarray(labels).reshape(-1)
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return cls(order[inverse], len(first))


@dataclass
class EvalReport:
    recall_at: dict
    nmi: float
    micro_acc: float | None = None
    macro_acc: float | None = None
    per_class: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {f"recall@{k}": float(v) for k, v in sorted(self.recall_at.items())}
        out["nmi"] = float(self.nmi)
        out["micro_acc"] = self.micro_acc
        out["macro_acc"] = self.macro_acc
        out["per_class"] = {str(k): float(v) for k, v in sorted(self.per_class.items())}
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def recall_at_k(embeddings, labels, ks=(1, 4, 8, 16)) -> dict:
    """Fraction of queries with a same-class item among their K nearest neighbours.

    The query itself is excluded; distances are squared Euclidean and ties
    resolve to the lower index.
    """
    x = as_dense(embeddings, name="embeddings")
    labels = np.asarray(labels).reshape(-1)
    b = x.shape[0]
    if b < 2:
        raise ShapeError("recall needs at least two samples")
    ks = [int(k) for k in ks]
    if max(ks) >= b:
        raise KTooLarge(f"K={max(ks)} needs more than {b} samples")
    if min(ks) < 1:
        raise ValueError("K must be at least 1")
    d = pairwise_sq_distances(x)
    np.fill_diagonal(d, np.inf)
    kmax = max(ks)
    order = np.argsort(d, axis=1, kind="stable")[:, :kmax]
    hits = labels[order] == labels[:, None]
    first_hit = np.where(hits.any(axis=1), hits.argmax(axis=1), kmax)
    return {k: float(np.mean(first_hit < k)) for k in ks}


def _sq_dist_to(points, centers):
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeanspp(points, k, rng):
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    closest = _sq_dist_to(points, np.array(centers))[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(points[idx])
        closest = np.minimum(closest, _sq_dist_to(points, points[idx:idx + 1])[:, 0])
    return np.array(centers)


def kmeans(points, k: int, rng, max_iters: int = 100, allow_duplicates: bool = False) -> Clustering:
    """Lloyd's algorithm with k-means++ seeding.

    Stops at an assignment fixpoint or after ``max_iters`` iterations. A
    cluster that empties is reseeded at the point farthest from its current
    center. ``sse_history`` holds the SSE after each assignment step.
    """
    x = as_dense(points, name="points")
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the {n} points")
    if not allow_duplicates and k > np.unique(x, axis=0).shape[0]:
        raise KTooLarge(f"k={k} exceeds the number of distinct points")
    rng = make_rng(rng)
    centers = _kmeanspp(x, k, rng)
    assign = np.full(n, -1, dtype=np.int64)
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        d = _sq_dist_to(x, centers)
        new_assign = np.argmin(d, axis=1)
        history.append(float(d[np.arange(n), new_assign].sum()))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = assign == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                far = int(np.argmax(d[np.arange(n), assign]))
                centers[j] = x[far]
                assign[far] = j
                d[far] = 0.0
    return Clustering(assign, k, centers, history, it)


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def contingency(truth, learned) -> np.ndarray:
    t = np.unique(np.asarray(truth), return_inverse=True)[1]
    c = np.unique(np.asarray(learned), return_inverse=True)[1]
    table = np.zeros((t.max() + 1, c.max() + 1), dtype=np.float64)
    np.add.at(table, (t, c), 1.0)
    return table


def nmi(truth, learned) -> float:
    """``I(truth, learned) / sqrt(H(truth) H(learned))`` with natural logs.

    When either entropy is zero the ratio is undefined; the result is 1 if the
    two partitions coincide and 0 otherwise.
    """
    t = truth.assignments if isinstance(truth, Clustering) else np.asarray(truth).reshape(-1)
    c = learned.assignments if isinstance(learned, Clustering) else np.asarray(learned).reshape(-1)
    if t.shape != c.shape:
        raise ShapeError("clusterings must cover the same samples")
    if t.size == 0:
        raise EmptyInput("empty clustering")
    table = contingency(t, c)
    n = table.sum()
    h_t = _entropy(table.sum(axis=1))
    h_c = _entropy(table.sum(axis=0))
    if h_t == 0.0 or h_c == 0.0:
        return 1.0 if _same_partition(table) else 0.0
    joint = table[table > 0] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[table > 0] / (n * n)
    mi = float((joint * np.log(joint / outer)).sum())
    return float(min(max(mi / np.sqrt(h_t * h_c), 0.0), 1.0))


def _same_partition(table):
    # identical partitions <=> every row and column has exactly one nonzero cell
    nz = table > 0
    return table.shape[0] == table.shape[1] and bool((nz.sum(axis=0) == 1).all() and (nz.sum(axis=1) == 1).all())


def accuracy(predictions, labels):
    """Return ``(micro, macro, per_class)``.

    ``per_class`` maps each class present in ``labels`` to its correct
    fraction; ``macro`` is their unweighted mean.
    """
    pred = np.asarray(predictions).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if pred.shape != y.shape:
        raise ShapeError("predictions and labels differ in length")
    if y.size == 0:
        raise EmptyInput("accuracy of an empty set")
    correct = pred == y
    per_class = {int(c): float(correct[y == c].mean()) for c in np.unique(y)}
    return float(correct.mean()), float(np.mean(list(per_class.values()))), per_class


def evaluate_embeddings(embeddings, labels, ks=(1, 4, 8, 16), rng=0, predictions=None) -> EvalReport:
    """Recall@K plus NMI of a k-means clustering with one cluster per class."""
    labels = np.asarray(labels).reshape(-1)
    recall = recall_at_k(embeddings, labels, ks)
    truth = Clustering.from_labels(labels)
    learned = kmeans(embeddings, truth.k, make_rng(rng), allow_duplicates=True)
    report = EvalReport(recall, nmi(truth, learned))
    if predictions is not None:
        report.micro_acc, report.macro_acc, report.per_class = accuracy(predictions, labels)
    return report
