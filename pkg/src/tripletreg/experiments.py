"""Desk-scale experiment rigs shared by the acceptance suite and the demo scripts.

Each function builds its dataset from a seed, trains, and returns plain
numbers, so results are reproducible from the seed alone.
"""

from __future__ import annotations

import time

from .datasets import SyntheticSpec, gen_long_tail, gen_synthetic, gen_synthetic_video, sod_dataset, train_test_split
from .network import desk_config, init_params
from .trainer import TrainConfig, evaluate_model, train

# 16x16 images rendered from an 8-d latent mixture; pixel noise sets the difficulty
IMAGE_SHAPE = (16, 16, 1)
LATENT_DIM = 8
SIGMA = 0.03
PIXEL_NOISE = 0.5
D_EMB = 16

MULTIMODAL_VARIANTS = {
    "softmax": dict(regularizer="none"),
    "semi_hard": dict(regularizer="triplet", mining="semi_hard", lam=1.0, margin=0.2),
    "center": dict(regularizer="center", lam=0.003, center_alpha=0.5),
}


def multimodal_data(seed: int, samples_per_class: int = 100):
    """10 classes x 2 modes; split 50/50 into train and test."""
    spec = SyntheticSpec(n_classes=10, modes_per_class=2, samples_per_class=samples_per_class,
                         dim=LATENT_DIM, sigma=SIGMA, seed=seed, image_shape=IMAGE_SHAPE, box=1.0,
                         pixel_noise=PIXEL_NOISE)
    return train_test_split(gen_synthetic(spec), 0.5, seed)


def run_multimodal(seed: int, variant: str, iterations: int = 3000) -> dict:
    """Train one variant on the multi-modal set; returns metrics, the log and wall time."""
    train_data, test_data = multimodal_data(seed)
    started = time.perf_counter()
    net = init_params(desk_config(IMAGE_SHAPE, 10, D_EMB), seed)
    cfg = TrainConfig(iterations=iterations, seed=seed, **MULTIMODAL_VARIANTS[variant])
    net, log = train(net, train_data, cfg)
    rep = evaluate_model(net, test_data, seed=seed)["embedding"]
    return {"accuracy": rep.micro_acc, "recall@1": rep.recall_at[1], "nmi": rep.nmi,
            "log": log, "seconds": time.perf_counter() - started}


LONG_TAIL = dict(n_classes=8, head_count=200, decay=0.55)


def long_tail_data(seed: int):
    """Long-tail training counts; the test split follows the same proportions at twice the size."""
    counts = gen_long_tail(**LONG_TAIL)
    spec = SyntheticSpec(n_classes=LONG_TAIL["n_classes"], samples_per_class=[3 * c for c in counts],
                         dim=LATENT_DIM, sigma=SIGMA, seed=seed, image_shape=IMAGE_SHAPE, box=1.0,
                         pixel_noise=PIXEL_NOISE)
    return train_test_split(gen_synthetic(spec), 2 / 3, seed)


def run_long_tail(seed: int, two_head: bool, iterations: int = 3000) -> dict:
    """Softmax-only on uniform batches, or the two-head model on pooled semi-hard batches."""
    train_data, test_data = long_tail_data(seed)
    started = time.perf_counter()
    net = init_params(desk_config(IMAGE_SHAPE, LONG_TAIL["n_classes"], D_EMB), seed)
    if two_head:
        kw = dict(regularizer="triplet", sampler="imbalanced", n_batches=3)
    else:
        kw = dict(regularizer="none", sampler="uniform")
    net, _ = train(net, train_data, TrainConfig(iterations=iterations, seed=seed, batch_size=33, **kw))
    rep = evaluate_model(net, test_data, seed=seed)["embedding"]
    return {"micro": rep.micro_acc, "macro": rep.macro_acc, "per_class": rep.per_class,
            "seconds": time.perf_counter() - started}


def run_collapse_rig(seed: int, mining: str, soft_margin: bool, iterations: int = 1500) -> dict:
    """Embedding head alone (softmax detached) at a high learning rate.

    Returns whether the collapse flag was raised and the first iteration it was.
    """
    spec = SyntheticSpec(n_classes=10, modes_per_class=2, samples_per_class=50, dim=LATENT_DIM,
                         sigma=SIGMA, seed=seed, image_shape=IMAGE_SHAPE, box=1.0, pixel_noise=PIXEL_NOISE)
    data = gen_synthetic(spec)
    net = init_params(desk_config(IMAGE_SHAPE, 10, D_EMB), seed)
    cfg = TrainConfig(iterations=iterations, seed=seed, base_lr=0.1, use_softmax=False,
                      mining=mining, soft_margin=soft_margin)
    _, log = train(net, data, cfg)
    first = next((e["iteration"] for e in log.events if e["event"] == "collapse"), None)
    return {"collapsed": log.collapsed, "first_collapse": first, "log": log}


def run_sod(seed: int, iterations: int = 2000, n_classes: int = 3) -> dict:
    """Motion classification from stack-of-difference inputs."""
    started = time.perf_counter()
    data = sod_dataset(gen_synthetic_video(n_classes, seed, n_per_class=40), seed)
    train_data, test_data = train_test_split(data, 0.5, seed)
    net = init_params(desk_config((16, 16, 5), n_classes, D_EMB), seed)
    net, _ = train(net, train_data, TrainConfig(iterations=iterations, seed=seed, batch_size=12, k_per_class=4))
    rep = evaluate_model(net, test_data, seed=seed)["embedding"]
    return {"accuracy": rep.micro_acc, "recall@1": rep.recall_at[1], "seconds": time.perf_counter() - started}
