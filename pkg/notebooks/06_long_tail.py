# %% [markdown]
# # Long-tailed classes
#
# Eight classes whose training counts fall from 200 to 3. We compare softmax
# trained on uniform batches with the two-head model fed by the pooled
# semi-hard sampler, looking at macro accuracy, which weights every class
# equally. This takes about a minute.

# %%
from tripletreg.experiments import LONG_TAIL, run_long_tail
from tripletreg.datasets import gen_long_tail

print("train counts:", gen_long_tail(**LONG_TAIL))
for two_head in (False, True):
    r = run_long_tail(seed=0, two_head=two_head, iterations=1500)
    name = "two-head" if two_head else "softmax"
    per_class = " ".join(f"{v:.2f}" for _, v in sorted(r["per_class"].items()))
    print(f"{name:<9} micro {r['micro']:.3f}  macro {r['macro']:.3f}  per class: {per_class}")
