"""Momentum-SGD training of the two-head network.

Each iteration samples a batch, runs the network, builds the embedding-head
loss (mined triplets, center, triplet-center or magnet loss), adds it to the
softmax loss with weight ``lam``, back-propagates and takes a momentum step.
A mode-collapse monitor watches the pre-normalization embedding norms.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, fields

import numpy as np

from .datasets import Dataset
from .errors import (
    ClassTooSmall,
    DegenerateVariance,
    EmptyTripletSet,
    InvalidConfig,
    NeedTwoClasses,
    OutOfRange,
    ShapeError,
)
from .evaluation import accuracy, evaluate_embeddings
from .geometry import pairwise_sq_distances
from .losses import (
    ClassCenters,
    assign_magnet_clusters,
    center_loss,
    combined_loss,
    magnet_loss,
    softmax_ce,
    tcl_loss,
    triplet_loss,
    update_centers,
)
from .mining import count_kinds, mine_batch_hard, mine_semi_hard
from .network import TwoHeadNet, backward, forward, predict
from .sampling import DatasetIndex, imbalanced_round, pk_sample, uniform_sample
from .tensor import spawn_rngs

REGULARIZERS = ("triplet", "center", "tcl", "magnet", "none")
MINING = ("hard", "semi_hard")
SAMPLERS = ("pk", "uniform", "imbalanced")

LOG_COLUMNS = ("iteration", "loss_total", "loss_soft", "loss_embed", "lr",
               "n_semi", "n_easy", "n_hard", "mean_norm", "collapse")


@dataclass
class TrainConfig:
    iterations: int = 500
    base_lr: float = 0.01
    lr_power: float = 1.0
    momentum: float = 0.9
    lam: float = 1.0
    regularizer: str = "triplet"
    mining: str = "semi_hard"
    margin: float = 0.2
    soft_margin: bool = False
    sampler: str = "pk"
    batch_size: int = 32
    k_per_class: int = 4
    n_batches: int = 3
    center_alpha: float = 0.5
    magnet_k: int = 2
    magnet_alpha: float = 1.0
    use_softmax: bool = True
    seed: int = 0
    collapse_threshold: float = 1e-3
    collapse_distance: float = 1e-2

    def validate(self):
        if self.iterations < 1:
            raise InvalidConfig("iterations must be >= 1")
        if self.base_lr <= 0:
            raise InvalidConfig("base_lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidConfig("momentum must lie in [0, 1)")
        if self.lam < 0:
            raise InvalidConfig("lam must be non-negative")
        if self.regularizer not in REGULARIZERS:
            raise InvalidConfig(f"regularizer must be one of {REGULARIZERS}")
        if self.mining not in MINING:
            raise InvalidConfig(f"mining must be one of {MINING}")
        if self.sampler not in SAMPLERS:
            raise InvalidConfig(f"sampler must be one of {SAMPLERS}")
        if self.margin <= 0 and not self.soft_margin:
            raise InvalidConfig("margin must be positive")
        return self

    @classmethod
    def from_dict(cls, d: dict, prefix: str = "train") -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise InvalidConfig(f"unknown key {prefix}.{key}")
        return cls(**d).validate()


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    @property
    def collapsed(self) -> bool:
        return any(r["collapse"] for r in self.records)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for r in self.records:
            writer.writerow([_fmt(r[c]) for c in LOG_COLUMNS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_jsonl(self, path=None) -> str:
        text = "".join(json.dumps({c: r[c] for c in LOG_COLUMNS}) + "\n" for r in self.records)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def lr_schedule(t: int, total: int, base_lr: float = 0.01, power: float = 1.0) -> float:
    """Polynomial decay ``base_lr * (1 - t / total) ** power`` ending at zero."""
    if t < 0 or t > total:
        raise OutOfRange(f"iteration {t} outside [0, {total}]")
    return base_lr * (1.0 - t / total) ** power


def sgd_momentum_step(params: dict, grads: dict, velocity: dict, lr: float, momentum: float):
    """``v <- momentum * v - lr * g``; ``p <- p + v``. Updates the dicts in place and returns them."""
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(p)
        v *= momentum
        v -= lr * g
        velocity[name] = v
        p += v
    return params, velocity


class CollapseMonitor:
    """Raises a flag when embeddings degenerate, with hysteresis on recovery.

    The flag goes up when the mean pre-normalization norm drops below
    ``threshold`` or every pairwise (normalized) embedding distance is below
    ``min_distance``. It only comes down once both quantities exceed ten
    times their thresholds again.
    """

    def __init__(self, threshold=1e-3, min_distance=1e-2):
        self.threshold = threshold
        self.min_distance = min_distance
        self.flag = False

    def update(self, mean_norm: float, max_dist: float) -> tuple[bool, str | None]:
        degenerate = mean_norm < self.threshold or max_dist < self.min_distance
        if not self.flag and degenerate:
            self.flag = True
            return True, "collapse"
        if self.flag and mean_norm > 10 * self.threshold and max_dist > 10 * self.min_distance:
            self.flag = False
            return False, "recovered"
        return self.flag, None


def _embedding_part(cfg, trace, y, centers, aux_rng):
    """Embedding-head loss for one batch; returns ``(LossResult | None, kinds)``."""
    emb = trace.embedding
    kinds = {"semi_hard": 0, "easy": 0, "hard": 0}
    if cfg.regularizer == "triplet":
        d = pairwise_sq_distances(emb)
        if cfg.mining == "hard":
            trip = mine_batch_hard(d, y)
        else:
            trip = mine_semi_hard(d, y, cfg.margin)
        kinds = count_kinds(d, trip, cfg.margin)
        return triplet_loss(emb, trip, cfg.margin, cfg.soft_margin), kinds
    if cfg.regularizer == "center":
        return center_loss(emb, y, centers), kinds
    if cfg.regularizer == "tcl":
        return tcl_loss(emb, y, centers, cfg.margin), kinds
    if cfg.regularizer == "magnet":
        mc = assign_magnet_clusters(emb, y, cfg.magnet_k, aux_rng, cfg.magnet_alpha)
        return magnet_loss(emb, y, mc), kinds
    return None, kinds


def train(net: TwoHeadNet, data: Dataset, config: TrainConfig, callback=None):
    """Train a copy of ``net``; returns ``(trained_net, TrainLog)``.

    Randomness comes from two generators spawned from ``config.seed``: one
    for batch sampling and one for auxiliary draws (magnet k-means), so the
    batch sequence does not depend on the loss being used.
    """
    cfg = config.validate()
    net = net.copy()
    if tuple(data.input_shape) != net.config.input_shape:
        raise ShapeError(f"dataset inputs {data.input_shape} do not match the network {net.config.input_shape}")
    X = data.as_images()
    index = DatasetIndex.from_labels(data.y)
    sample_rng, aux_rng = spawn_rngs(cfg.seed, 2)
    velocity: dict = {}
    centers = None
    if cfg.regularizer in ("center", "tcl"):
        centers = ClassCenters.zeros(net.config.n_classes, net.config.d_emb, cfg.center_alpha)
    monitor = CollapseMonitor(cfg.collapse_threshold, cfg.collapse_distance)
    log = TrainLog()

    for t in range(cfg.iterations):
        triplets_fixed = None
        if cfg.sampler == "imbalanced":
            def embed_fn(ids):
                return predict(net, X[ids])[1]
            try:
                found, ids = imbalanced_round(index, cfg.batch_size, cfg.n_batches, embed_fn,
                                              cfg.margin, sample_rng)
                triplets_fixed = found
            except EmptyTripletSet:
                ids = uniform_sample(index, cfg.batch_size, sample_rng).ids
        elif cfg.sampler == "pk":
            ids = pk_sample(index, cfg.batch_size, cfg.k_per_class, sample_rng).ids
        else:
            ids = uniform_sample(index, cfg.batch_size, sample_rng).ids
        y = data.y[ids]
        trace = forward(net, X[ids])

        soft = softmax_ce(trace.logits, y) if cfg.use_softmax else None
        kinds = {"semi_hard": 0, "easy": 0, "hard": 0}
        embed = None
        if cfg.sampler == "imbalanced" and cfg.regularizer == "triplet":
            if triplets_fixed is not None:
                embed = triplet_loss(trace.embedding, triplets_fixed, cfg.margin, cfg.soft_margin)
                kinds["semi_hard"] = len(triplets_fixed)
            else:
                log.events.append({"iteration": t, "event": "empty_triplet_set"})
        else:
            try:
                embed, kinds = _embedding_part(cfg, trace, y, centers, aux_rng)
            except (EmptyTripletSet, NeedTwoClasses):
                log.events.append({"iteration": t, "event": "empty_triplet_set"})
            except (ClassTooSmall, DegenerateVariance) as exc:
                # a batch the magnet loss cannot use; take a softmax-only step
                log.events.append({"iteration": t, "event": "embedding_loss_skipped",
                                   "reason": type(exc).__name__})
        total = combined_loss(soft, embed, cfg.lam)

        grads, _ = backward(net, trace, total.grad_logits, total.grad_embeddings)
        lr = lr_schedule(t, cfg.iterations, cfg.base_lr, cfg.lr_power)
        sgd_momentum_step(net.params, grads, velocity, lr, cfg.momentum)
        net.bump()
        if centers is not None:
            centers = update_centers(centers, trace.embedding, y)

        mean_norm = float(trace.embedding_norms.mean())
        max_dist = float(pairwise_sq_distances(trace.embedding).max()) if len(ids) > 1 else 0.0
        flag, event = monitor.update(mean_norm, max_dist)
        if event:
            log.events.append({"iteration": t, "event": event, "mean_norm": mean_norm})
        log.records.append({
            "iteration": t,
            "loss_total": float(total.value),
            "loss_soft": float(soft.value) if soft is not None else 0.0,
            "loss_embed": float(embed.value) if embed is not None else 0.0,
            "lr": float(lr),
            "n_semi": kinds["semi_hard"],
            "n_easy": kinds["easy"],
            "n_hard": kinds["hard"],
            "mean_norm": mean_norm,
            "collapse": bool(flag),
        })
        if callback is not None:
            callback(t, net, log)
    return net, log


def evaluate_model(net: TwoHeadNet, data: Dataset, ks=(1, 4, 8, 16), seed: int = 0) -> dict:
    """Reports for the embedding head and for the pooled features ``x``.

    Both reports carry the classification accuracy of the logits head. ``ks``
    larger than the dataset allows are dropped.
    """
    preds, emb, pooled = predict(net, data.as_images())
    ks = [k for k in ks if k < len(data)]
    micro, macro, per_class = accuracy(preds, data.y)
    out = {}
    for name, feats in (("embedding", emb), ("penultimate", pooled)):
        rep = evaluate_embeddings(feats, data.y, ks, rng=seed)
        rep.micro_acc, rep.macro_acc, rep.per_class = micro, macro, per_class
        out[name] = rep
    return out


__all__ = [
    "TrainConfig", "TrainLog", "CollapseMonitor", "lr_schedule", "sgd_momentum_step",
    "train", "evaluate_model", "LOG_COLUMNS",
]
