# %% [markdown]
# # Losses and their gradients
#
# Every loss returns a `LossResult` holding the value and the analytic
# gradients. Here we evaluate each one on a small batch, then confirm the
# gradients against central finite differences.

# %%
import numpy as np

from tripletreg import ClassCenters, center_loss, l2_normalize, softmax_ce, tcl_loss, triplet_loss, update_centers
from tripletreg.gradcheck import COMPONENTS, run_gradcheck

rng = np.random.default_rng(0)
labels = np.array([0, 0, 1, 1, 2, 2])

# %% [markdown]
# Softmax cross-entropy on uniform logits is `ln(n_classes)` per sample.

# %%
res = softmax_ce(np.zeros((6, 3)), labels)
print(f"softmax on zero logits: {res.value:.4f}  (ln 3 = {np.log(3):.4f})")

# %% [markdown]
# Triplet loss with a hinge and its soft-margin variant. Triplets are index
# rows `(anchor, positive, negative)` into the batch.

# %%
emb, _ = l2_normalize(rng.normal(size=(6, 4)))
triplets = np.array([[0, 1, 2], [2, 3, 4], [4, 5, 0]])
hard = triplet_loss(emb, triplets, margin=0.2)
soft = triplet_loss(emb, triplets, soft=True)
print(f"triplet hinge {hard.value:.4f}, soft margin {soft.value:.4f}")

# %% [markdown]
# Center loss pulls features towards per-class centers, which follow a moving
# average. Triplet-center loss compares the own center with the nearest other.

# %%
centers = ClassCenters.zeros(3, 4, alpha=0.5)
feats = rng.normal(size=(6, 4))
for step in range(5):
    print(f"step {step}: center loss {center_loss(feats, labels, centers).value:.4f}")
    centers = update_centers(centers, feats, labels)
print(f"triplet-center loss {tcl_loss(feats, labels, centers).value:.4f}")

# %% [markdown]
# The gradient check covers every loss plus the full network. Each row is the
# worst relative error over the random points.

# %%
errors = run_gradcheck(seed=0, n_points=10)
for name in COMPONENTS:
    print(f"{name:<14} {errors[name]:.2e}")
