"""
Graphs, datasets and stratified folds
=====================================

Load MUTAG from its TUDataset text files, look at one molecule, build
degree features for a featureless copy and split into stratified folds.
"""

# %%
# Loading a benchmark
# -------------------
# Node labels become one-hot features and graph labels are remapped to 0..C-1.
import numpy as np

from _common import mutag
from srgcl.graph import GraphDataset, Graph, stratified_kfold, synthesize_degree_features, proportional_deviation

ds = mutag()
print(f"{ds.name}: {len(ds)} graphs, {ds.num_classes} classes, {ds.d_feat} node features")
print("class counts:", np.bincount(ds.labels))

g = ds[0]
print(f"first graph: {g.node_count} nodes, {g.edge_count} edges, label {g.label}")
print("adjacency is symmetric:", np.array_equal(g.adjacency(), g.adjacency().T))

# %%
# Degree features
# ---------------
# Datasets without node labels get one-hot degree features, capped.
bare = GraphDataset("bare", [Graph(h.node_count, h.edges, np.zeros((h.node_count, 0)), h.label) for h in ds.graphs], 2, 0)
deg = synthesize_degree_features(bare, max_degree_cap=4)
print("degree feature width:", deg.d_feat)
print("degree one-hots of graph 0:", np.argmax(deg[0].features, axis=1))

# %%
# Stratified folds
# ----------------
# Fold sizes differ by at most one and every fold follows the class ratio
# to within one graph.
split = stratified_kfold(ds, folds=10, seed=0)
print("fold sizes:", split.sizes())
print("largest deviation from proportional class counts:", round(proportional_deviation(ds.labels, split), 3))
