# %% [markdown]
# # Mining triplets from a batch
#
# Batch-hard mining takes, for each anchor, the farthest positive and the
# nearest negative. Semi-hard mining keeps every anchor-positive pair and picks
# the closest negative that is still farther than the positive, falling back
# to easy and then hard negatives.

# %%
import numpy as np

from tripletreg import NegativeKind, classify_negative, l2_normalize, mine_batch_hard, mine_semi_hard, pairwise_sq_distances
from tripletreg.mining import batch_hard_oracle, semi_hard_oracle

rng = np.random.default_rng(3)
labels = np.repeat(np.arange(4), 4)
emb, _ = l2_normalize(rng.normal(size=(16, 8)))
d = pairwise_sq_distances(emb)

# %% [markdown]
# A negative is hard when it is no farther than the positive, semi-hard when
# it sits inside the margin band, and easy beyond it.

# %%
for d_an in (0.3, 0.5, 0.6, 0.75, 0.9):
    print(d_an, classify_negative(0.5, d_an, 0.2))

# %%
hard = mine_batch_hard(d, labels)
print("batch-hard:", len(hard), "triplets, one per anchor")
print(hard.triplets[:4])

semi = mine_semi_hard(d, labels, m=0.2)
print("semi-hard:", len(semi), "triplets over ordered positive pairs")
for kind in NegativeKind:
    print(f"  {kind.value:<9} {semi.meta['kinds'][kind.value]}")

# %% [markdown]
# Both miners agree exactly with brute-force enumeration.

# %%
assert np.array_equal(hard.triplets, batch_hard_oracle(d, labels).triplets)
assert np.array_equal(semi.triplets, semi_hard_oracle(d, labels, 0.2).triplets)
print("oracles agree")
