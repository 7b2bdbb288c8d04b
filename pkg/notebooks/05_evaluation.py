# %% [markdown]
# # Evaluating embeddings
#
# Recall@K asks whether any of the K nearest neighbours (excluding the query)
# shares its label. NMI compares k-means clusters with the true classes.

# %%
import numpy as np

from tripletreg.evaluation import accuracy, evaluate_embeddings, kmeans, nmi, recall_at_k

rng = np.random.default_rng(0)
labels = np.repeat(np.arange(4), 25)
tight = np.eye(4)[labels] + rng.normal(scale=0.05, size=(100, 4))
loose = np.eye(4)[labels] + rng.normal(scale=0.6, size=(100, 4))

for name, emb in (("tight", tight), ("loose", loose)):
    print(name, recall_at_k(emb, labels, ks=(1, 4)))

# %% [markdown]
# k-means uses k-means++ seeding and Lloyd iterations; the SSE never rises.

# %%
clusters = kmeans(loose, 4, rng=0)
print("SSE history:", [round(s, 2) for s in clusters.sse_history])
print("NMI:", round(nmi(labels, clusters.assignments), 3))

# %% [markdown]
# Micro accuracy counts samples, macro accuracy averages per-class accuracy,
# so a weak minority class shows up in the second number only.

# %%
y = np.array([0] * 9 + [1])
pred = np.array([0] * 9 + [0])
print(accuracy(pred, y)[:2])

print(evaluate_embeddings(tight, labels, ks=(1, 4, 8)).to_json(indent=1))
