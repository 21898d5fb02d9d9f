"""Graph data model, TUDataset ingestion and dataset utilities."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

logger = logging.getLogger(__name__)


class DatasetFormatError(ValueError):
    """Raised when a TUDataset directory is missing files or has bad content."""


@dataclass
class Graph:
    """Simple undirected graph with dense node features.

    ``edges`` is an ``(m, 2)`` integer array of unordered pairs stored as
    ``u < v`` and sorted lexicographically, so two graphs with the same edge
    set always hold identical arrays.
    """

    node_count: int
    edges: np.ndarray
    features: np.ndarray
    label: Optional[int] = None

    def __post_init__(self) -> None:
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] != self.node_count:
            raise ValueError(
                f"features must have shape ({self.node_count}, d), got {self.features.shape}"
            )

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def d_feat(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_edge_list(cls, node_count, edge_list, features, label=None, drop_self_loops=True):
        """Build a graph from arbitrary (possibly duplicated, either-direction) pairs."""
        return cls(node_count, canonical_edges(edge_list, node_count, drop_self_loops), features, label)

    def validate(self) -> None:
        """Check every structural invariant, raising ``ValueError`` on the first failure."""
        e = self.edges
        if len(e):
            if e.min() < 0 or e.max() >= self.node_count:
                raise ValueError("edge endpoint out of range")
            if np.any(e[:, 0] >= e[:, 1]):
                raise ValueError("edges must be stored as u < v without self-loops")
            ids = e[:, 0] * self.node_count + e[:, 1]
            if np.any(np.diff(ids) <= 0):
                raise ValueError("edges must be sorted and unique")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite node features")

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency matrix."""
        a = np.zeros((self.node_count, self.node_count))
        a[self.edges[:, 0], self.edges[:, 1]] = 1.0
        a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.node_count)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def same_as(self, other: "Graph") -> bool:
        return (
            self.node_count == other.node_count
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.features, other.features)
            and self.label == other.label
        )


def canonical_edges(pairs, node_count: int, drop_self_loops: bool = True) -> np.ndarray:
    """Symmetrize and deduplicate pairs into the sorted ``u < v`` layout."""
    e = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(e) == 0:
        return e
    if e.min() < 0 or e.max() >= node_count:
        raise ValueError("edge endpoint out of range")
    loops = e[:, 0] == e[:, 1]
    if loops.any():
        if not drop_self_loops:
            raise ValueError("self-loop in edge list")
        e = e[~loops]
    e = np.sort(e, axis=1)
    ids = np.unique(e[:, 0] * node_count + e[:, 1])
    return np.stack([ids // node_count, ids % node_count], axis=1)


def relabel(g: Graph, perm: Sequence[int]) -> Graph:
    """Return ``g`` with node ``v`` renamed to ``perm[v]``."""
    perm = np.asarray(perm, dtype=np.int64)
    features = np.empty_like(g.features)
    features[perm] = g.features
    return Graph.from_edge_list(g.node_count, perm[g.edges], features, g.label)


def disjoint_union(graphs: Sequence[Graph]) -> Graph:
    offsets = np.cumsum([0] + [g.node_count for g in graphs])
    edges = np.concatenate([g.edges + off for g, off in zip(graphs, offsets)])
    features = np.concatenate([g.features for g in graphs])
    return Graph(int(offsets[-1]), edges, features)


@dataclass
class GraphDataset:
    name: str
    graphs: list[Graph]
    num_classes: int
    d_feat: int

    def __len__(self) -> int:
        return len(self.graphs)

    def __getitem__(self, i: int) -> Graph:
        return self.graphs[i]

    @property
    def labels(self) -> np.ndarray:
        if any(g.label is None for g in self.graphs):
            raise ValueError(f"dataset {self.name!r} has unlabeled graphs")
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def validate(self) -> None:
        for i, g in enumerate(self.graphs):
            g.validate()
            if g.d_feat != self.d_feat:
                raise ValueError(f"graph {i} has d_feat {g.d_feat}, dataset says {self.d_feat}")
            if g.label is not None and not 0 <= g.label < self.num_classes:
                raise ValueError(f"graph {i} label {g.label} outside [0, {self.num_classes})")


# ---------------------------------------------------------------------------
# TUDataset text format
# ---------------------------------------------------------------------------


def _read_rows(path: Path, dtype, width: Optional[int] = None) -> list:
    rows = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            parts = [p.strip() for p in text.split(",")]
            try:
                row = [dtype(p) for p in parts]
            except ValueError:
                raise DatasetFormatError(f"{path.name}:{lineno}: malformed line {text!r}") from None
            if width is not None and len(row) != width:
                raise DatasetFormatError(
                    f"{path.name}:{lineno}: expected {width} values, got {len(row)}"
                )
            rows.append(row if width != 1 else row[0])
    return rows


def load_tudataset(directory, name: str) -> GraphDataset:
    """Load ``name`` from a TUDataset-style directory of text files.

    Node labels are one-hot encoded over the observed vocabulary and node
    attributes, when present, are appended after the one-hot block. Graph
    labels are remapped to ``0..num_classes-1`` by sorted value.
    """
    directory = Path(directory)
    path = lambda suffix: directory / f"{name}_{suffix}.txt"  # noqa: E731
    for suffix in ("A", "graph_indicator", "graph_labels"):
        if not path(suffix).exists():
            raise DatasetFormatError(f"missing mandatory file {path(suffix)}")

    indicator = np.array(_read_rows(path("graph_indicator"), int, 1), dtype=np.int64)
    n_total = len(indicator)
    graph_ids = np.unique(indicator)
    raw_labels = _read_rows(path("graph_labels"), int, 1)
    if len(raw_labels) != len(graph_ids):
        raise DatasetFormatError(
            f"{len(raw_labels)} graph labels for {len(graph_ids)} graphs in {path('graph_labels').name}"
        )
    if np.any(np.diff(indicator) < 0):
        raise DatasetFormatError("graph_indicator must be non-decreasing")

    blocks = []
    if path("node_labels").exists():
        node_labels = np.array(_read_rows(path("node_labels"), int, 1), dtype=np.int64)
        if len(node_labels) != n_total:
            raise DatasetFormatError(f"node_labels has {len(node_labels)} rows, expected {n_total}")
        vocab, idx = np.unique(node_labels, return_inverse=True)
        blocks.append(np.eye(len(vocab))[idx])
    if path("node_attributes").exists():
        attrs = np.array(_read_rows(path("node_attributes"), float), dtype=np.float64)
        if attrs.shape[0] != n_total:
            raise DatasetFormatError(f"node_attributes has {attrs.shape[0]} rows, expected {n_total}")
        blocks.append(attrs.reshape(n_total, -1))
    features = np.concatenate(blocks, axis=1) if blocks else np.zeros((n_total, 0))

    edges = np.array(_read_rows(path("A"), int, 2), dtype=np.int64).reshape(-1, 2) - 1
    if len(edges) and (edges.min() < 0 or edges.max() >= n_total):
        bad = int(np.flatnonzero((edges < 0).any(1) | (edges >= n_total).any(1))[0])
        raise DatasetFormatError(f"{path('A').name}:{bad + 1}: node index out of range")
    if len(edges) and np.any(indicator[edges[:, 0]] != indicator[edges[:, 1]]):
        raise DatasetFormatError(f"{path('A').name}: edge joins two different graphs")
    loops = edges[:, 0] == edges[:, 1] if len(edges) else np.zeros(0, bool)
    if loops.any():
        logger.warning("%s: dropping %d self-loops", name, int(loops.sum()))
        edges = edges[~loops]

    vocab = sorted(set(raw_labels))
    label_map = {v: i for i, v in enumerate(vocab)}

    starts = np.searchsorted(indicator, graph_ids, side="left")
    stops = np.searchsorted(indicator, graph_ids, side="right")
    owner = indicator[edges[:, 0]] if len(edges) else np.zeros(0, np.int64)
    order = np.argsort(owner, kind="stable")
    edges, owner = edges[order], owner[order]
    e_starts = np.searchsorted(owner, graph_ids, side="left")
    e_stops = np.searchsorted(owner, graph_ids, side="right")

    graphs = []
    for gi, (s, t, es, et) in enumerate(zip(starts, stops, e_starts, e_stops)):
        if t == s:
            raise DatasetFormatError(f"graph {graph_ids[gi]} is empty")
        local = edges[es:et] - s
        graphs.append(
            Graph(int(t - s), canonical_edges(local, int(t - s)), features[s:t], label_map[raw_labels[gi]])
        )
    ds = GraphDataset(name, graphs, num_classes=len(vocab), d_feat=features.shape[1])
    return ds


def write_tudataset(dataset: GraphDataset, directory, name: Optional[str] = None) -> None:
    """Write ``dataset`` in TUDataset layout; features go to ``node_attributes``.

    Each undirected edge is written in both directions, matching the files
    distributed with the benchmark collection.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    name = name or dataset.name
    offset = 0
    with (directory / f"{name}_A.txt").open("w") as fa, (
        directory / f"{name}_graph_indicator.txt"
    ).open("w") as fi, (directory / f"{name}_graph_labels.txt").open("w") as fl:
        attr_lines = []
        for gid, g in enumerate(dataset.graphs, start=1):
            for u, v in g.edges:
                fa.write(f"{u + offset + 1}, {v + offset + 1}\n{v + offset + 1}, {u + offset + 1}\n")
            fi.write(f"{gid}\n" * g.node_count)
            fl.write(f"{g.label if g.label is not None else 0}\n")
            attr_lines.extend(", ".join(repr(float(x)) for x in row) for row in g.features)
            offset += g.node_count
    if dataset.d_feat:
        (directory / f"{name}_node_attributes.txt").write_text("\n".join(attr_lines) + "\n")


def synthesize_degree_features(dataset: GraphDataset, max_degree_cap: int = 10) -> GraphDataset:
    """One-hot ``min(degree, cap)`` node features for a featureless dataset."""
    if dataset.d_feat != 0:
        raise ValueError(f"dataset {dataset.name!r} already has {dataset.d_feat} node features")
    if max_degree_cap < 1:
        raise ValueError("max_degree_cap must be positive")
    eye = np.eye(max_degree_cap + 1)
    graphs = [
        Graph(g.node_count, g.edges, eye[np.minimum(g.degrees(), max_degree_cap)], g.label)
        for g in dataset.graphs
    ]
    return GraphDataset(dataset.name, graphs, dataset.num_classes, max_degree_cap + 1)


# ---------------------------------------------------------------------------
# Splits and synthetic data
# ---------------------------------------------------------------------------


@dataclass
class FoldSplit:
    fold_count: int
    assignments: np.ndarray

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.fold_count)


def _round_fold_counts(class_totals: np.ndarray, fold_sizes: np.ndarray) -> np.ndarray:
    """Integer class-by-fold counts, each the floor or ceiling of its proportional share.

    Floors the proportional matrix and then hands out the leftover units with
    a max-flow over (class, fold) cells whose share is fractional; integral
    row and column sums guarantee the flow saturates.
    """
    n = class_totals.sum()
    share = np.outer(class_totals, fold_sizes) / n
    counts = np.floor(share + 1e-12).astype(np.int64)
    row_need = class_totals - counts.sum(1)
    col_need = fold_sizes - counts.sum(0)
    if row_need.sum() == 0:
        return counts
    n_cls, n_fold = counts.shape
    src, sink = 0, 1 + n_cls + n_fold
    rows, cols, caps = [], [], []
    for c in range(n_cls):
        rows.append(src), cols.append(1 + c), caps.append(row_need[c])
        for f in range(n_fold):
            if share[c, f] - counts[c, f] > 1e-12:
                rows.append(1 + c), cols.append(1 + n_cls + f), caps.append(1)
    for f in range(n_fold):
        rows.append(1 + n_cls + f), cols.append(sink), caps.append(col_need[f])
    size = sink + 1
    graph = csr_matrix((np.array(caps, dtype=np.int32), (rows, cols)), shape=(size, size))
    flow = maximum_flow(graph, src, sink).flow.toarray()
    counts += np.clip(flow[1 : 1 + n_cls, 1 + n_cls : sink], 0, None).astype(np.int64)
    return counts


def stratified_kfold(dataset_or_labels, folds: int, seed: int) -> FoldSplit:
    """Stratified fold assignment.

    Fold sizes differ by at most one and every per-fold class count is the
    floor or ceiling of the class's proportional share of that fold.
    """
    if isinstance(dataset_or_labels, GraphDataset):
        labels = dataset_or_labels.labels
    else:
        labels = np.asarray(dataset_or_labels, dtype=np.int64)
    n = len(labels)
    if folds < 1:
        raise ValueError("folds must be positive")
    if folds > n:
        raise ValueError(f"cannot split {n} graphs into {folds} folds")
    rng = np.random.default_rng(seed)
    sizes = np.full(folds, n // folds, dtype=np.int64)
    sizes[rng.permutation(folds)[: n % folds]] += 1
    classes = np.unique(labels)
    totals = np.array([np.sum(labels == c) for c in classes], dtype=np.int64)
    counts = _round_fold_counts(totals, sizes)
    assignments = np.empty(n, dtype=np.int64)
    for ci, cls in enumerate(classes):
        members = np.flatnonzero(labels == cls)
        assignments[members[rng.permutation(len(members))]] = np.repeat(np.arange(folds), counts[ci])
    return FoldSplit(folds, assignments)


@dataclass
class LatentClusters:
    points: np.ndarray
    labels: np.ndarray
    means: np.ndarray = field(repr=False)


def synth_latent_clusters(classes: int, per_class: int, dim: int, spread: float, seed: int) -> LatentClusters:
    """Isotropic Gaussian blobs whose means sit one unit apart along the first axis."""
    if min(classes, per_class, dim) < 1 or spread < 0:
        raise ValueError("classes, per_class and dim must be positive; spread non-negative")
    rng = np.random.default_rng(seed)
    means = np.zeros((classes, dim))
    means[:, 0] = np.arange(classes)
    labels = np.repeat(np.arange(classes), per_class)
    points = means[labels] + spread * rng.standard_normal((classes * per_class, dim))
    return LatentClusters(points, labels, means)


def nearest_centroid_accuracy(clusters: LatentClusters) -> float:
    centroids = np.stack([clusters.points[clusters.labels == c].mean(0) for c in range(len(clusters.means))])
    d = ((clusters.points[:, None, :] - centroids[None]) ** 2).sum(-1)
    return float(np.mean(d.argmin(1) == clusters.labels))


def proportional_deviation(labels: np.ndarray, split: FoldSplit) -> float:
    """Largest gap between a fold's class count and its proportional share."""
    worst = 0.0
    sizes = split.sizes()
    n = len(labels)
    for cls in np.unique(labels):
        total = np.sum(labels == cls)
        for f in range(split.fold_count):
            got = np.sum((labels == cls) & (split.assignments == f))
            worst = max(worst, abs(got - total * sizes[f] / n))
    return worst


__all__ = [
    "DatasetFormatError",
    "FoldSplit",
    "Graph",
    "GraphDataset",
    "LatentClusters",
    "canonical_edges",
    "disjoint_union",
    "load_tudataset",
    "nearest_centroid_accuracy",
    "proportional_deviation",
    "relabel",
    "stratified_kfold",
    "synth_latent_clusters",
    "synthesize_degree_features",
    "write_tudataset",
]
