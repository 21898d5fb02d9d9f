"""
Augmentations and candidate views
=================================

Each transform perturbs an exact number of nodes, edges or feature rows.
The candidate generator draws many views per anchor from a mixture of
transforms, each with its own recorded seed.
"""

# %%
import numpy as np

from _common import mutag
from srgcl.augment import AugKind, UPPGConfig, attr_mask, edge_perturb, node_drop, subgraph_sample, uppg_sample

g = mutag()[5]
rng = np.random.default_rng(0)
print(f"anchor: {g.node_count} nodes, {g.edge_count} edges")

# %%
# Single transforms at ratio 0.2
# ------------------------------
nd = node_drop(g, 0.2, rng)
ep = edge_perturb(g, 0.2, rng)
am = attr_mask(g, 0.2, rng)
sg = subgraph_sample(g, 0.8, rng)
print("node drop      ->", nd.node_count, "nodes")
print("edge perturb   ->", len(g.edge_set() - ep.edge_set()), "removed,", len(ep.edge_set() - g.edge_set()), "added")
print("attribute mask ->", int(np.sum(~am.features.any(axis=1))), "zeroed rows")
print("subgraph       ->", sg.node_count, "nodes kept")

# %%
# A candidate set
# ---------------
# The default mixture is uniform over node drop, edge perturbation and
# attribute masking; subgraphs are available but left out.
cfg = UPPGConfig(c=50)
cands = uppg_sample(g, cfg, np.random.default_rng(1))
kinds, counts = np.unique(cands.kinds, return_counts=True)
print(dict(zip(kinds.tolist(), counts.tolist())))
print("first provenance record:", cands.provenance()[0])

# %%
# Skewed mixtures are just different probabilities.
skewed = UPPGConfig([(AugKind.NODE_DROP, 0.8), (AugKind.EDGE_PERTURB, 0.2)], ratio=0.1, c=20)
print(np.unique(uppg_sample(g, skewed, np.random.default_rng(2)).kinds, return_counts=True))
