"""
Choosing positives in latent space
==================================

Nearest-candidate selection, annealed Boltzmann sampling, and why picking
close views raises label agreement on clustered data.
"""

# %%
import numpy as np

from srgcl.graph import synth_latent_clusters
from srgcl.selector import (
    DistanceKind,
    SelectionMode,
    SelectorConfig,
    boltzmann_from_distances,
    distances,
    label_precision,
    probabilistic_from_distances,
    random_select,
    temperature,
    topk_from_distances,
)

# %%
# Distances
# ---------
rng = np.random.default_rng(0)
anchor, cands = rng.standard_normal(4), rng.standard_normal((5, 4))
for kind in DistanceKind:
    print(f"{kind.value:>3}:", np.round(distances(anchor, cands, kind), 3))

# %%
# Temperature schedule
# --------------------
print("T(t) for s = 0.4:", [round(temperature(t, 1.0, 0.4), 4) for t in range(0, 30, 5)])

d = np.array([0.2, 0.5, 0.9, 1.4])
for T in (2.0, 0.5, 0.05):
    print(f"T = {T:<4} probabilities:", np.round(boltzmann_from_distances(d, T), 3))

# %%
# As T falls, sampling collapses onto the top-k choice.
cfg = SelectorConfig(SelectionMode.PROBABILISTIC, k=2, distance=DistanceKind.L2, t0=1.0, s=0.4)
for t in (0, 10, 29):
    same = sum(
        np.array_equal(probabilistic_from_distances(d, cfg, t, rng).chosen, topk_from_distances(d, 2).chosen)
        for _ in range(500)
    )
    print(f"epoch {t:>2}: agrees with top-k in {same / 5:.0f}% of draws")

# %%
# Label agreement on clustered points
# -----------------------------------
data = synth_latent_clusters(classes=2, per_class=100, dim=8, spread=0.15, seed=0)
top, rand = [], []
for a in rng.choice(200, 100, replace=False):
    pool = rng.choice(np.delete(np.arange(200), a), 50, replace=False)
    dist = distances(data.points[a], data.points[pool], DistanceKind.L2)
    top.append(label_precision(data.labels[pool[topk_from_distances(dist, 2).chosen]], data.labels[a]))
    rand.append(label_precision(data.labels[pool[random_select(50, 2, rng).chosen]], data.labels[a]))
print(f"top-k precision {np.mean(top):.3f}, random precision {np.mean(rand):.3f}")
