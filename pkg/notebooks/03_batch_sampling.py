# %% [markdown]
# # Building batches
#
# PK batches draw P classes and K samples from each. For long-tailed data the
# pooled procedure draws several uniform batches, mines semi-hard triplets over
# the pool with the current embedding, and keeps at most `b // 3` of them.

# %%
import numpy as np

from tripletreg.datasets import gen_long_tail
from tripletreg.sampling import DatasetIndex, imbalanced_round, pk_sample

rng = np.random.default_rng(0)
labels = np.repeat(np.arange(6), [30, 20, 10, 5, 3, 1])
index = DatasetIndex.from_labels(labels)

plan = pk_sample(index, b=12, k=3, rng=rng)
print("PK batch classes:", plan.classes)
print("labels:", labels[plan.ids])

# %% [markdown]
# Counts for a long tail decay geometrically from the head class.

# %%
print(gen_long_tail(8, 200, 0.55))

# %% [markdown]
# The pooled round needs an embedding function. A random projection of
# class-dependent points stands in for a network here.

# %%
points = rng.normal(size=(len(labels), 4)) + labels[:, None]


def embed(ids):
    x = points[ids]
    return x / np.linalg.norm(x, axis=1, keepdims=True)


triplets, ids = imbalanced_round(index, b=12, n_batches=3, embed_fn=embed, m=0.2, rng=rng)
print(f"{len(triplets)} triplets (at most 12 // 3 = 4)")
print("anchor/positive/negative labels:")
print(labels[ids].reshape(-1, 3))
