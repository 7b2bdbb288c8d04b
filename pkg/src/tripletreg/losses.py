"""Loss functions with analytic gradients.

All distances are squared Euclidean. Mining indices, argmin centers and magnet
cluster statistics are constants of the current step: gradients flow only
through the features passed in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BatchTooSmall,
    ClassTooSmall,
    DegenerateVariance,
    EmptyTripletSet,
    InvalidLabel,
    NeedTwoClasses,
    ShapeError,
    UnknownClass,
)
from .mining import TripletSet
from .tensor import as_dense


@dataclass
class LossResult:
    value: float
    grad_embeddings: np.ndarray | None = None
    grad_logits: np.ndarray | None = None
    grad_centers: np.ndarray | None = None
    parts: dict = field(default_factory=dict)


@dataclass
class ClassCenters:
    """Per-class center vectors updated by a moving average with rate ``alpha``."""

    centers: np.ndarray
    alpha: float = 0.5
    counts: np.ndarray | None = None

    def __post_init__(self):
        self.centers = as_dense(self.centers, name="centers")
        if self.centers.ndim != 2:
            raise ShapeError("centers must be an n x d matrix")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.counts is None:
            self.counts = np.zeros(self.centers.shape[0], dtype=np.int64)

    @classmethod
    def zeros(cls, n_classes: int, dim: int, alpha: float = 0.5) -> "ClassCenters":
        return cls(np.zeros((n_classes, dim)), alpha)

    @property
    def n_classes(self) -> int:
        return self.centers.shape[0]

    def copy(self) -> "ClassCenters":
        return ClassCenters(self.centers.copy(), self.alpha, self.counts.copy())


@dataclass
class MagnetConfig:
    """Per-class k-means state used by :func:`magnet_loss`.

    ``cluster_centers[c]`` is a ``K x d`` array for class ``c`` and
    ``assignments[i]`` the cluster index of sample ``i`` within its class.
    """

    k_clusters: int
    alpha_margin: float
    assignments: np.ndarray
    cluster_centers: dict


def _labels(labels, b):
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != b:
        raise ShapeError(f"expected {b} labels, got {labels.shape[0]}")
    return labels


def softmax_ce(logits, labels) -> LossResult:
    """Mean cross-entropy of softmax(logits) against integer labels."""
    z = as_dense(logits, name="logits")
    if z.ndim != 2 or z.shape[1] < 2:
        raise ShapeError("logits must be b x n with n >= 2")
    b, n = z.shape
    y = _labels(labels, b)
    if np.any((y < 0) | (y >= n)):
        raise InvalidLabel(f"labels must lie in [0, {n})")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_norm[:, None]
    rows = np.arange(b)
    value = -log_probs[rows, y].mean()
    grad = np.exp(log_probs)
    grad[rows, y] -= 1.0
    grad /= b
    return LossResult(float(value), grad_logits=grad)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def triplet_loss(embeddings, triplets, margin: float = 0.2, soft: bool = False) -> LossResult:
    """Mean triplet loss over a fixed triplet set.

    Hard-margin mode averages ``max(D(a,p) - D(a,n) + margin, 0)``; soft mode
    averages ``softplus(D(a,p) - D(a,n))`` and ignores ``margin``.
    """
    x = as_dense(embeddings, name="embeddings")
    t = triplets.triplets if isinstance(triplets, TripletSet) else np.asarray(triplets, dtype=np.int64)
    t = t.reshape(-1, 3)
    if t.shape[0] == 0:
        raise EmptyTripletSet("triplet loss needs at least one triplet")
    if not soft and margin < 0:
        raise ValueError("margin must be non-negative")
    a, p, n = t[:, 0], t[:, 1], t[:, 2]
    diff_ap = x[a] - x[p]
    diff_an = x[a] - x[n]
    d_ap = np.einsum("ij,ij->i", diff_ap, diff_ap)
    d_an = np.einsum("ij,ij->i", diff_an, diff_an)
    arg = d_ap - d_an
    if soft:
        per = _softplus(arg)
        w = _sigmoid(arg)
    else:
        arg = arg + margin
        per = np.maximum(arg, 0.0)
        w = (arg > 0).astype(np.float64)
    count = t.shape[0]
    w = (w / count)[:, None]
    g = np.zeros_like(x)
    # dD(a,p)/dx_a = 2(x_a - x_p), dD(a,p)/dx_p = -2(x_a - x_p)
    np.add.at(g, a, 2.0 * w * (diff_ap - diff_an))
    np.add.at(g, p, -2.0 * w * diff_ap)
    np.add.at(g, n, 2.0 * w * diff_an)
    return LossResult(float(per.mean()), grad_embeddings=g,
                      parts={"active": int(np.count_nonzero(per > 0))})


def _center_rows(centers: ClassCenters, y):
    if np.any((y < 0) | (y >= centers.n_classes)):
        raise UnknownClass(f"label without a center (have {centers.n_classes} centers)")
    return centers.centers[y]


def center_loss(features, labels, centers: ClassCenters) -> LossResult:
    """``0.5 * sum_i ||x_i - c_{y_i}||^2`` summed (not averaged) over the batch."""
    x = as_dense(features, name="features")
    y = _labels(labels, x.shape[0])
    diff = x - _center_rows(centers, y)
    grad_c = np.zeros_like(centers.centers)
    np.add.at(grad_c, y, -diff)
    return LossResult(0.5 * float(np.sum(diff * diff)), grad_embeddings=diff, grad_centers=grad_c)


def update_centers(centers: ClassCenters, features, labels) -> ClassCenters:
    """Moving-average center step; returns a new :class:`ClassCenters`.

    For each class ``j`` in the batch:
    ``delta_j = sum_{y_i = j}(c_j - x_i) / (1 + n_j)`` and
    ``c_j <- c_j - alpha * delta_j``. Classes absent from the batch keep
    their center.
    """
    x = as_dense(features, name="features")
    y = _labels(labels, x.shape[0])
    _center_rows(centers, y)
    out = centers.copy()
    counts = np.bincount(y, minlength=centers.n_classes)
    sums = np.zeros_like(out.centers)
    np.add.at(sums, y, centers.centers[y] - x)
    present = counts > 0
    delta = sums[present] / (1.0 + counts[present])[:, None]
    out.centers[present] -= centers.alpha * delta
    out.counts = centers.counts + counts
    return out


def tcl_loss(features, labels, centers: ClassCenters, margin: float = 0.2) -> LossResult:
    """Triplet-center loss, summed over the batch.

    Per sample: ``max(D(x, c_own) - min_{j != own} D(x, c_j) + margin, 0)``
    where ``j`` ranges over the other classes' centers.
    """
    if centers.n_classes < 2:
        raise NeedTwoClasses("triplet-center loss needs at least two centers")
    x = as_dense(features, name="features")
    y = _labels(labels, x.shape[0])
    _center_rows(centers, y)
    c = centers.centers
    diff_all = x[:, None, :] - c[None, :, :]
    d_all = np.einsum("bkd,bkd->bk", diff_all, diff_all)
    rows = np.arange(x.shape[0])
    d_own = d_all[rows, y]
    others = d_all.copy()
    others[rows, y] = np.inf
    nearest = np.argmin(others, axis=1)
    arg = d_own - others[rows, nearest] + margin
    active = (arg > 0).astype(np.float64)[:, None]
    grad = 2.0 * active * (diff_all[rows, y] - diff_all[rows, nearest])
    grad_c = np.zeros_like(c)
    np.add.at(grad_c, y, -2.0 * active * diff_all[rows, y])
    np.add.at(grad_c, nearest, 2.0 * active * diff_all[rows, nearest])
    return LossResult(float(np.maximum(arg, 0.0).sum()), grad_embeddings=grad,
                      grad_centers=grad_c, parts={"nearest": nearest})


def assign_magnet_clusters(features, labels, k: int, rng, alpha_margin: float = 1.0,
                           max_iters: int = 100) -> MagnetConfig:
    """Run k-means with ``k`` clusters inside every class present in the batch."""
    from .evaluation import kmeans

    if k < 1:
        raise ValueError("k must be at least 1")
    x = as_dense(features, name="features")
    y = _labels(labels, x.shape[0])
    assignments = np.zeros(x.shape[0], dtype=np.int64)
    cluster_centers = {}
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.size < k:
            raise ClassTooSmall(f"class {c} has {idx.size} samples, needs {k}")
        pts = x[idx]
        if k == 1:
            cluster_centers[int(c)] = pts.mean(axis=0, keepdims=True)
            continue
        result = kmeans(pts, k, rng, max_iters=max_iters, allow_duplicates=True)
        assignments[idx] = result.assignments
        cluster_centers[int(c)] = result.centers
    return MagnetConfig(k, alpha_margin, assignments, cluster_centers)


def magnet_loss(features, labels, config: MagnetConfig, variance: float | None = None) -> LossResult:
    """Magnet loss over the batch, averaged over samples.

    Per sample the loss is
    ``d_own / (2 s2) + alpha + logsumexp_{c != own, k}(-d_ck / (2 s2) - alpha)``
    where ``s2`` is the unbiased variance of samples around their own cluster
    center. There is no outer hinge, so the value can be negative.

    Passing ``variance`` pins ``s2`` (used when checking gradients, where the
    variance is a constant of the step).
    """
    x = as_dense(features, name="features")
    y = _labels(labels, x.shape[0])
    n_samples = x.shape[0]
    if n_samples < 2:
        raise BatchTooSmall("magnet loss needs at least two samples")
    classes = sorted(config.cluster_centers)
    if len(set(y.tolist())) < 2 or len(classes) < 2:
        raise NeedTwoClasses("magnet loss needs at least two classes")
    missing = set(y.tolist()) - set(classes)
    if missing:
        raise UnknownClass(f"no clusters for classes {sorted(missing)}")
    alpha = config.alpha_margin
    mu_all = np.concatenate([config.cluster_centers[c] for c in classes])
    owner = np.concatenate([np.full(len(config.cluster_centers[c]), c) for c in classes])
    offset = {c: int(np.flatnonzero(owner == c)[0]) for c in classes}
    own_idx = np.array([offset[int(c)] for c in y]) + config.assignments
    diff = x[:, None, :] - mu_all[None, :, :]
    d = np.einsum("bkd,bkd->bk", diff, diff)
    rows = np.arange(n_samples)
    d_own = d[rows, own_idx]
    var = d_own.sum() / (n_samples - 1) if variance is None else float(variance)
    if var < 1e-12:
        raise DegenerateVariance(f"variance {var:.3g} too small")
    scale = 1.0 / (2.0 * var)
    logits = -scale * d - alpha
    other = owner[None, :] != y[:, None]
    logits = np.where(other, logits, -np.inf)
    top = logits.max(axis=1, keepdims=True)
    w = np.exp(logits - top)
    denom = w.sum(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(denom[:, 0])
    per = scale * d_own + alpha + lse
    w /= denom
    # d/dx [scale * d_own] = 2 scale (x - mu_own); d/dx lse = -2 scale sum_k w_k (x - mu_k)
    grad = 2.0 * scale * (diff[rows, own_idx] - np.einsum("bk,bkd->bd", w, diff))
    return LossResult(float(per.mean()), grad_embeddings=grad / n_samples,
                      parts={"variance": float(var)})


def combined_loss(softmax_part: LossResult | None, embedding_part: LossResult | None,
                  lam: float = 1.0) -> LossResult:
    """``L_soft + lam * L_embed`` with gradients combined the same way."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    soft_v = softmax_part.value if softmax_part is not None else 0.0
    emb_v = embedding_part.value if embedding_part is not None else 0.0
    g_logits = softmax_part.grad_logits if softmax_part is not None else None
    g_emb = None
    if embedding_part is not None and embedding_part.grad_embeddings is not None:
        g_emb = lam * embedding_part.grad_embeddings
    return LossResult(soft_v + lam * emb_v, grad_embeddings=g_emb, grad_logits=g_logits,
                      parts={"soft": soft_v, "embed": emb_v})


def loss_from_distances(dists, triplets, margin: float = 0.2, soft: bool = False) -> float:
    """Triplet loss value read directly off a distance matrix (no gradient)."""
    d = np.asarray(dists, dtype=np.float64)
    t = triplets.triplets if isinstance(triplets, TripletSet) else np.asarray(triplets).reshape(-1, 3)
    if t.shape[0] == 0:
        raise EmptyTripletSet("triplet loss needs at least one triplet")
    arg = d[t[:, 0], t[:, 1]] - d[t[:, 0], t[:, 2]]
    per = _softplus(arg) if soft else np.maximum(arg + margin, 0.0)
    return float(per.mean())


__all__ = [
    "LossResult", "ClassCenters", "MagnetConfig", "softmax_ce", "triplet_loss",
    "center_loss", "update_centers", "tcl_loss", "assign_magnet_clusters",
    "magnet_loss", "combined_loss", "loss_from_distances",
]
