"""Two-head classification + embedding networks with triplet-loss regularization.

Submodules:

- ``tensor``: float64 helpers, seeded generators, finite-difference oracle
- ``geometry``: unit normalization, squared-Euclidean distance matrices
- ``losses``: softmax, triplet, center, triplet-center, magnet and combined losses
- ``mining``: batch-hard and semi-hard triplet mining with brute-force oracles
- ``sampling``: PK batches and the pooled imbalanced-data procedure
- ``network``: the numpy two-head conv net, forward/backward, checkpoints
- ``trainer``: momentum SGD loop with collapse monitoring
- ``evaluation``: Recall@K, k-means, NMI, micro/macro accuracy
- ``datasets``: synthetic mixtures, long-tail counts, stack-of-difference video, CSV
"""

from .geometry import EmbeddingBatch, l2_normalize, pairwise_sq_distances
from .losses import (
    ClassCenters,
    LossResult,
    MagnetConfig,
    assign_magnet_clusters,
    center_loss,
    combined_loss,
    magnet_loss,
    softmax_ce,
    tcl_loss,
    triplet_loss,
    update_centers,
)
from .mining import (
    NegativeKind,
    TripletSet,
    classify_negative,
    enumerate_all_triplets,
    mine_batch_hard,
    mine_semi_hard,
)
from .network import NetConfig, TwoHeadNet, backward, desk_config, forward, init_params
from .tensor import finite_diff_grad, make_rng
from .trainer import TrainConfig, TrainLog, lr_schedule, sgd_momentum_step, train

__version__ = "0.1.0"

__all__ = [
    "ClassCenters",
    "LossResult",
    "MagnetConfig",
    "assign_magnet_clusters",
    "center_loss",
    "combined_loss",
    "magnet_loss",
    "softmax_ce",
    "tcl_loss",
    "triplet_loss",
    "update_centers",
    "NegativeKind",
    "TripletSet",
    "classify_negative",
    "enumerate_all_triplets",
    "mine_batch_hard",
    "mine_semi_hard",
    "EmbeddingBatch",
    "l2_normalize",
    "pairwise_sq_distances",
    "NetConfig",
    "TwoHeadNet",
    "backward",
    "desk_config",
    "forward",
    "init_params",
    "finite_diff_grad",
    "make_rng",
    "TrainConfig",
    "TrainLog",
    "lr_schedule",
    "sgd_momentum_step",
    "train",
]
