"""Triplet selection over a batch distance matrix.

Two miners are provided:

* :func:`mine_batch_hard` -- farthest positive and nearest negative per anchor.
* :func:`mine_semi_hard` -- every ordered anchor-positive pair, paired with the
  nearest negative of the best available kind (semi-hard, then easy, then hard).

Each miner has a loop-based counterpart (``*_oracle``) that enumerates every
candidate explicitly. The vectorized miners must agree with them exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTripletSet, NeedTwoClasses, ShapeError


class NegativeKind(enum.Enum):
    SEMI_HARD = "semi_hard"
    EASY = "easy"
    HARD = "hard"


# lower value = preferred by the semi-hard miner
_PRIORITY = {NegativeKind.SEMI_HARD: 0, NegativeKind.EASY: 1, NegativeKind.HARD: 2}


@dataclass
class TripletSet:
    """``(anchor, positive, negative)`` index rows plus bookkeeping.

    ``n_skipped`` counts anchor-positive pairs for which no acceptable
    negative was found (only the pooled imbalanced sampler skips pairs).
    """

    triplets: np.ndarray
    strategy: str
    n_skipped: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.triplets, dtype=np.int64)
        if t.size == 0:
            t = t.reshape(0, 3)
        if t.ndim != 2 or t.shape[1] != 3:
            raise ShapeError(f"triplets must be an (n, 3) array, got {t.shape}")
        self.triplets = t

    def __len__(self):
        return self.triplets.shape[0]

    def __iter__(self):
        return (tuple(int(i) for i in row) for row in self.triplets)

    def as_tuples(self) -> list[tuple[int, int, int]]:
        return list(self)

    def validate(self, labels) -> None:
        labels = np.asarray(labels)
        for a, p, n in self:
            if a == p or labels[a] != labels[p] or labels[a] == labels[n]:
                raise ValueError(f"invalid triplet {(a, p, n)}")


def classify_negative(d_ap: float, d_an: float, m: float) -> NegativeKind:
    """Kind of a negative relative to the anchor-positive distance.

    Semi-hard iff ``d_ap < d_an < d_ap + m``. The boundaries are closed on the
    neighbouring kinds: ``d_an == d_ap`` is hard, ``d_an == d_ap + m`` is easy.
    """
    if d_an <= d_ap:
        return NegativeKind.HARD
    if d_an >= d_ap + m:
        return NegativeKind.EASY
    return NegativeKind.SEMI_HARD


def count_kinds(dists: np.ndarray, triplets: TripletSet, m: float) -> dict[str, int]:
    """Histogram of negative kinds over a triplet set."""
    counts = {k.value: 0 for k in NegativeKind}
    for a, p, n in triplets:
        counts[classify_negative(dists[a, p], dists[a, n], m).value] += 1
    return counts


def _check(dists, labels):
    d = np.asarray(dists, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] != labels.shape[0]:
        raise ShapeError("distance matrix must be b x b with b labels")
    if np.unique(labels).size < 2:
        raise NeedTwoClasses("mining needs at least two classes in the batch")
    return d, labels


def mine_batch_hard(dists, labels) -> TripletSet:
    """One triplet per anchor: its farthest positive and nearest negative.

    Anchors without any same-class partner are skipped. Ties go to the lowest
    index.
    """
    d, labels = _check(dists, labels)
    same = labels[:, None] == labels[None, :]
    pos_mask = same.copy()
    np.fill_diagonal(pos_mask, False)
    anchors = np.flatnonzero(pos_mask.any(axis=1))
    if anchors.size == 0:
        raise EmptyTripletSet("no anchor has a positive in the batch")
    pos_d = np.where(pos_mask, d, -np.inf)[anchors]
    neg_d = np.where(~same, d, np.inf)[anchors]
    p = np.argmax(pos_d, axis=1)
    n = np.argmin(neg_d, axis=1)
    return TripletSet(np.stack([anchors, p, n], axis=1), "hard")


def _semi_hard_candidates(d, labels, m):
    """Per ordered pair ``(a, p)``: priority tier of every column and the pair list."""
    same = labels[:, None] == labels[None, :]
    pos_mask = same.copy()
    np.fill_diagonal(pos_mask, False)
    a_idx, p_idx = np.nonzero(pos_mask)
    d_ap = d[a_idx, p_idx][:, None]
    d_an = d[a_idx]
    neg = ~same[a_idx]
    # same expressions as classify_negative so boundaries agree bit for bit
    hard = d_an <= d_ap
    easy = d_an >= d_ap + m
    tier = np.where(hard, 2, np.where(easy, 1, 0))
    tier = np.where(neg, tier, 3)
    return a_idx, p_idx, d_an, tier


def mine_semi_hard(dists, labels, m: float = 0.2) -> TripletSet:
    """Every ordered anchor-positive pair with its best negative.

    The negative is the nearest one of the highest-priority non-empty kind
    (semi-hard > easy > hard), lowest index on ties. ``meta["kinds"]`` holds
    how many triplets landed in each kind.
    """
    if m <= 0:
        raise ValueError("margin must be positive")
    d, labels = _check(dists, labels)
    a_idx, p_idx, d_an, tier = _semi_hard_candidates(d, labels, m)
    if a_idx.size == 0:
        raise EmptyTripletSet("no anchor-positive pairs in the batch")
    best_tier = tier.min(axis=1)
    masked = np.where(tier == best_tier[:, None], d_an, np.inf)
    n_idx = np.argmin(masked, axis=1)
    names = ("semi_hard", "easy", "hard")
    kinds = {names[t]: int(np.count_nonzero(best_tier == t)) for t in range(3)}
    return TripletSet(np.stack([a_idx, p_idx, n_idx], axis=1), "semi_hard",
                      meta={"kinds": kinds})


def mine_semi_hard_only(dists, labels, m: float = 0.2) -> TripletSet:
    """Nearest strictly semi-hard negative per ordered pair; pairs without one are skipped."""
    if m <= 0:
        raise ValueError("margin must be positive")
    d, labels = _check(dists, labels)
    a_idx, p_idx, d_an, tier = _semi_hard_candidates(d, labels, m)
    if a_idx.size == 0:
        raise EmptyTripletSet("no anchor-positive pairs in the pool")
    has_semi = (tier == 0).any(axis=1)
    masked = np.where(tier == 0, d_an, np.inf)
    n_idx = np.argmin(masked, axis=1)
    keep = np.flatnonzero(has_semi)
    out = np.stack([a_idx[keep], p_idx[keep], n_idx[keep]], axis=1)
    return TripletSet(out, "semi_hard", n_skipped=int(a_idx.size - keep.size))


def enumerate_all_triplets(labels) -> TripletSet:
    """Every valid ``(a, p, n)`` in index order."""
    labels = np.asarray(labels).reshape(-1)
    if np.unique(labels).size < 2:
        raise NeedTwoClasses("need at least two classes")
    b = labels.shape[0]
    out = [
        (a, p, n)
        for a in range(b)
        for p in range(b)
        if p != a and labels[p] == labels[a]
        for n in range(b)
        if labels[n] != labels[a]
    ]
    return TripletSet(np.array(out, dtype=np.int64).reshape(-1, 3), "exhaustive")


# -- brute-force oracles ---------------------------------------------------


def batch_hard_oracle(dists, labels) -> TripletSet:
    """Exhaustive scan over every (p, n) pair per anchor."""
    d = np.asarray(dists, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    b = labels.shape[0]
    rows = []
    for a in range(b):
        best = None
        for p in range(b):
            if p == a or labels[p] != labels[a]:
                continue
            for n in range(b):
                if labels[n] == labels[a]:
                    continue
                # farthest p first, then nearest n, then lowest indices
                key = (-d[a, p], d[a, n], p, n)
                if best is None or key < best[0]:
                    best = (key, p, n)
        if best is not None:
            rows.append((a, best[1], best[2]))
    if not rows:
        raise EmptyTripletSet("no anchor has a positive in the batch")
    return TripletSet(rows, "hard")


def semi_hard_oracle(dists, labels, m: float = 0.2) -> TripletSet:
    """Classify every negative of every ordered pair and apply the priority rule."""
    d = np.asarray(dists, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    b = labels.shape[0]
    rows = []
    for a in range(b):
        for p in range(b):
            if p == a or labels[p] != labels[a]:
                continue
            candidates = [
                (_PRIORITY[classify_negative(d[a, p], d[a, n], m)], d[a, n], n)
                for n in range(b)
                if labels[n] != labels[a]
            ]
            if candidates:
                rows.append((a, p, min(candidates)[2]))
    if not rows:
        raise EmptyTripletSet("no anchor-positive pairs in the batch")
    return TripletSet(rows, "semi_hard")
