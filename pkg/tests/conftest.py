from pathlib import Path

import numpy as np
import pytest

from srgcl.graph import Graph, GraphDataset, load_tudataset

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def mutag():
    return load_tudataset(DATA / "MUTAG", "MUTAG")


def path_graph(n, d=1):
    edges = [(i, i + 1) for i in range(n - 1)]
    return Graph(n, edges, np.ones((n, d)))


def cycle_graph(n, d=1):
    edges = sorted((min(i, (i + 1) % n), max(i, (i + 1) % n)) for i in range(n))
    return Graph(n, edges, np.ones((n, d)))


def complete_graph(n, d=1):
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return Graph(n, edges, np.ones((n, d)))


def random_graph(rng, n_max=12, d=3, p=0.35, label=None):
    n = int(rng.integers(1, n_max + 1))
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    return Graph(n, np.stack([iu[0][keep], iu[1][keep]], 1), rng.standard_normal((n, d)), label)


def motif_dataset(per_class=10, seed=0):
    """Two-class toy set: rings versus stars of random size with constant features."""
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(per_class):
        n = int(rng.integers(5, 9))
        ring = cycle_graph(n)
        graphs.append(Graph(n, ring.edges, np.ones((n, 2)), 0))
        star = [(0, j) for j in range(1, n)]
        graphs.append(Graph(n, star, np.ones((n, 2)), 1))
    return GraphDataset("motifs", graphs, 2, 2)
