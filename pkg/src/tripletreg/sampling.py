"""Training-batch construction.

``pk_sample`` draws P classes with K samples each (balanced data).
``imbalanced_round`` pools several uniformly drawn batches, mines semi-hard
triplets over the pool and keeps at most ``b // 3`` of them (long-tailed data).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import EmptyTripletSet, IndivisibleBatch, NotEnoughClasses
from .geometry import pairwise_sq_distances
from .mining import TripletSet, mine_semi_hard_only
from .tensor import make_rng


@dataclass
class DatasetIndex:
    """Sample ids grouped by class, ids being positions in the label array."""

    labels: np.ndarray
    by_class: dict

    @classmethod
    def from_labels(cls, labels) -> "DatasetIndex":
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        by_class = {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}
        return cls(labels, by_class)

    @property
    def classes(self) -> list[int]:
        return sorted(self.by_class)

    @property
    def counts(self) -> dict:
        return {c: ids.size for c, ids in self.by_class.items()}

    def __len__(self):
        return self.labels.shape[0]


@dataclass
class BatchPlan:
    ids: np.ndarray
    classes: list

    def __len__(self):
        return self.ids.shape[0]


def pk_sample(index: DatasetIndex, b: int, k: int, rng) -> BatchPlan:
    """``b // k`` distinct classes, ``k`` samples from each.

    Classes are drawn uniformly without replacement. Within a class samples
    are drawn without replacement; a class smaller than ``k`` contributes all
    of its samples and then fills up with random repeats.
    """
    if k < 1 or b % k:
        raise IndivisibleBatch(f"batch size {b} is not a multiple of K={k}")
    p = b // k
    classes = index.classes
    if len(classes) < p:
        raise NotEnoughClasses(f"need {p} classes, dataset has {len(classes)}")
    rng = make_rng(rng)
    chosen = rng.choice(np.array(classes), size=p, replace=False)
    ids = []
    for c in chosen:
        pool = index.by_class[int(c)]
        if pool.size >= k:
            ids.append(rng.choice(pool, size=k, replace=False))
        else:
            extra = rng.choice(pool, size=k - pool.size, replace=True)
            ids.append(rng.permutation(np.concatenate([pool, extra])))
    return BatchPlan(np.concatenate(ids), [int(c) for c in chosen])


def uniform_sample(index: DatasetIndex, b: int, rng) -> BatchPlan:
    """``b`` distinct samples drawn uniformly, so batches follow the class imbalance."""
    rng = make_rng(rng)
    n = len(index)
    ids = rng.choice(n, size=b, replace=b > n)
    return BatchPlan(ids, sorted(set(index.labels[ids].tolist())))


def imbalanced_round(index: DatasetIndex, b: int, n_batches: int,
                     embed_fn: Callable[[np.ndarray], np.ndarray], m: float, rng):
    """One pooled mining round for imbalanced data.

    Draws ``n_batches`` uniform batches of size ``b``, embeds them with
    ``embed_fn`` (sample ids -> ``len(ids) x d`` embeddings), and pairs every
    positive pair of the pool with its nearest semi-hard negative. Pairs
    without one are skipped (counted in ``TripletSet.n_skipped``), as are
    pairs that repeat the same sample id. If more than ``b // 3`` triplets
    remain they are shuffled and truncated.

    Returns ``(triplets, ids)``: ``ids`` lists the chosen samples as
    ``[a0, p0, n0, a1, p1, n1, ...]`` and ``triplets`` indexes into ``ids``.
    """
    if b < 3:
        raise ValueError("b must be at least 3")
    if n_batches < 1:
        raise ValueError("n_batches must be at least 1")
    rng = make_rng(rng)
    pool = np.concatenate([uniform_sample(index, b, rng).ids for _ in range(n_batches)])
    labels = index.labels[pool]
    if np.unique(labels).size < 2:
        raise EmptyTripletSet("pool holds a single class")
    emb = np.asarray(embed_fn(pool), dtype=np.float64)
    dists = pairwise_sq_distances(emb)
    found = mine_semi_hard_only(dists, labels, m)
    rows = found.triplets
    dup = pool[rows[:, 0]] == pool[rows[:, 1]]
    rows = rows[~dup]
    if rows.shape[0] == 0:
        raise EmptyTripletSet("no positive pair in the pool has a semi-hard negative")
    limit = b // 3
    if rows.shape[0] > limit:
        rows = rows[rng.permutation(rows.shape[0])[:limit]]
    ids = pool[rows.reshape(-1)]
    local = np.arange(ids.size).reshape(-1, 3)
    out = TripletSet(local, "semi_hard", n_skipped=found.n_skipped,
                     meta={"pool": pool, "pool_triplets": rows, "dists": dists,
                           "n_found": int(found.triplets.shape[0] - int(dup.sum()))})
    return out, ids
