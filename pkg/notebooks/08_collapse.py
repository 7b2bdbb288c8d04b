# %% [markdown]
# # Embedding collapse
#
# With batch-hard mining, a soft margin and a high learning rate, the
# embedding head alone tends to map every input to the same point. The
# trainer watches the mean pre-normalization norm and the largest pairwise
# distance between normalized embeddings, and logs a `collapse` event when
# either falls below its threshold. In this rig the norms stay large while
# every embedding turns to the same direction, so the distance test fires.
# Semi-hard mining with a margin keeps the embedding spread out.

# %%
from tripletreg.experiments import run_collapse_rig

for mining, soft in (("hard", True), ("semi_hard", False)):
    r = run_collapse_rig(seed=0, mining=mining, soft_margin=soft, iterations=300)
    print(f"{mining:<10} soft={soft!s:<5} collapsed={r['collapsed']}  first flagged at {r['first_collapse']}")
    events = [e for e in r["log"].events if e["event"] in ("collapse", "recovered")]
    print("  events:", events[:3])
