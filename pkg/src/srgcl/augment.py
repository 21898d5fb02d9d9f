"""Rule-based graph transforms and the unified candidate-view generator."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import Graph


class AugKind(str, enum.Enum):
    NODE_DROP = "N"
    EDGE_PERTURB = "E"
    ATTR_MASK = "A"
    SUBGRAPH = "S"

    @classmethod
    def parse(cls, text: str) -> "AugKind":
        key = text.strip().upper()
        aliases = {"NODEDROP": "N", "EDGEPERTURB": "E", "ATTRMASK": "A", "SUBGRAPH": "S"}
        return cls(aliases.get(key.replace("_", ""), key))


def _check_ratio(ratio: float) -> None:
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"ratio must lie in [0, 1), got {ratio}")


def _induced(g: Graph, keep: np.ndarray) -> Graph:
    """Subgraph on the boolean mask ``keep``, reindexed in original node order."""
    new_index = np.cumsum(keep) - 1
    e = g.edges
    if len(e):
        alive = keep[e[:, 0]] & keep[e[:, 1]]
        e = new_index[e[alive]]
    return Graph(int(keep.sum()), e, g.features[keep], g.label)


def node_drop(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    """Remove ``floor(ratio * n)`` uniformly chosen nodes (never all of them)."""
    _check_ratio(ratio)
    if g.node_count < 1:
        raise ValueError("node_drop needs at least one node")
    r = min(math.floor(ratio * g.node_count), g.node_count - 1)
    if r == 0:
        return Graph(g.node_count, g.edges.copy(), g.features.copy(), g.label)
    keep = np.ones(g.node_count, dtype=bool)
    keep[rng.choice(g.node_count, r, replace=False)] = False
    return _induced(g, keep)


def _pair_ids(edges: np.ndarray, n: int) -> np.ndarray:
    """Row-major index of ``u < v`` pairs within the strict upper triangle."""
    u, v = edges[:, 0], edges[:, 1]
    return u * (2 * n - u - 1) // 2 + (v - u - 1)


def _pairs_from_ids(ids: np.ndarray, n: int) -> np.ndarray:
    # row starts: S(u) = u*(2n-u-1)/2; pick the largest u with S(u) <= id
    starts = np.arange(n) * (2 * n - np.arange(n) - 1) // 2
    u = np.searchsorted(starts, ids, side="right") - 1
    v = ids - starts[u] + u + 1
    return np.stack([u, v], axis=1)


def edge_perturb(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    """Drop ``floor(ratio * m)`` edges and add as many non-edges, both uniform.

    If the input has fewer non-edges than that, every non-edge is added.
    """
    _check_ratio(ratio)
    n, m = g.node_count, g.edge_count
    r = math.floor(ratio * m)
    if r == 0:
        return Graph(n, g.edges.copy(), g.features.copy(), g.label)
    existing = _pair_ids(g.edges, n)  # sorted because edges are sorted
    kept = np.delete(existing, rng.choice(m, r, replace=False))
    free = n * (n - 1) // 2 - m
    add = min(r, free)
    if add:
        ranks = np.sort(rng.choice(free, add, replace=False))
        # rank q among non-edges -> pair id q + #existing ids <= that pair id
        added = ranks + np.searchsorted(existing - np.arange(m), ranks, side="right")
        kept = np.sort(np.concatenate([kept, added]))
    return Graph(n, _pairs_from_ids(kept, n), g.features.copy(), g.label)


def attr_mask(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    """Zero the feature rows of ``floor(ratio * n)`` uniformly chosen nodes."""
    _check_ratio(ratio)
    if g.d_feat < 1:
        raise ValueError("attr_mask needs node features")
    features = g.features.copy()
    r = math.floor(ratio * g.node_count)
    if r:
        features[rng.choice(g.node_count, r, replace=False)] = 0.0
    return Graph(g.node_count, g.edges.copy(), features, g.label)


def subgraph_sample(g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    """Induced subgraph on a random-walk-grown connected node set.

    The walk starts at a uniform node and aims for ``ceil(ratio * n)`` nodes.
    When the reachable component is exhausted first, the grown set is
    returned as is, so disconnected inputs can yield fewer nodes.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    n = g.node_count
    target = min(n, math.ceil(ratio * n))
    neighbors = [[] for _ in range(n)]
    for u, v in g.edges:
        neighbors[u].append(v)
        neighbors[v].append(u)
    start = int(rng.integers(n))
    visited = {start}
    order = [start]
    current = start
    stall = 0
    while len(visited) < target:
        nbrs = neighbors[current]
        if not nbrs:
            current = order[int(rng.integers(len(order)))]
            if all(not neighbors[x] for x in order):
                break
            continue
        nxt = nbrs[int(rng.integers(len(nbrs)))]
        if nxt not in visited:
            visited.add(nxt)
            order.append(nxt)
            stall = 0
        else:
            stall += 1
            if stall > 4 * n and not any(y not in visited for x in order for y in neighbors[x]):
                break
        current = nxt
    keep = np.zeros(n, dtype=bool)
    keep[list(visited)] = True
    return _induced(g, keep)


TRANSFORMS = {
    AugKind.NODE_DROP: node_drop,
    AugKind.EDGE_PERTURB: edge_perturb,
    AugKind.ATTR_MASK: attr_mask,
    AugKind.SUBGRAPH: subgraph_sample,
}

DEFAULT_KINDS = (AugKind.NODE_DROP, AugKind.EDGE_PERTURB, AugKind.ATTR_MASK)


@dataclass
class UPPGConfig:
    """Categorical mixture over transforms plus the number of views per anchor."""

    transforms: Sequence[tuple[AugKind, float]] = field(
        default_factory=lambda: [(k, 1.0 / len(DEFAULT_KINDS)) for k in DEFAULT_KINDS]
    )
    ratio: float = 0.2
    c: int = 50

    @classmethod
    def uniform(cls, kinds: Sequence[AugKind] = DEFAULT_KINDS, ratio: float = 0.2, c: int = 50) -> "UPPGConfig":
        kinds = [AugKind.parse(k) if isinstance(k, str) else k for k in kinds]
        return cls([(k, 1.0 / len(kinds)) for k in kinds], ratio, c)

    @property
    def kinds(self) -> list[AugKind]:
        return [k for k, _ in self.transforms]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.transforms], dtype=np.float64)

    def validate(self, k: int = 1) -> None:
        if not self.transforms:
            raise ValueError("uppg.transforms must be non-empty")
        p = self.probabilities
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"uppg.transforms probabilities must be >= 0 and sum to 1, got {p.tolist()}")
        if self.c < 1:
            raise ValueError("uppg.c must be positive")
        if self.c < k:
            raise ValueError(f"uppg.c ({self.c}) must be >= selector.k ({k})")
        if not 0.0 <= self.ratio < 1.0:
            raise ValueError(f"uppg.ratio must lie in [0, 1), got {self.ratio}")

    def to_dict(self) -> dict:
        return {"transforms": [[k.value, p] for k, p in self.transforms], "ratio": self.ratio, "c": self.c}

    @classmethod
    def from_dict(cls, d: dict) -> "UPPGConfig":
        return cls([(AugKind.parse(k), float(p)) for k, p in d["transforms"]], d["ratio"], d["c"])


@dataclass
class CandidateSet:
    anchor_index: int
    views: list[Graph]
    kinds: np.ndarray
    seeds: np.ndarray

    def __len__(self) -> int:
        return len(self.views)

    def provenance(self) -> list[dict]:
        return [{"kind": str(k), "seed": int(s)} for k, s in zip(self.kinds, self.seeds)]


def apply_transform(kind: AugKind, g: Graph, ratio: float, rng: np.random.Generator) -> Graph:
    if kind is AugKind.SUBGRAPH:
        # subgraph ratio is the retained share; the other transforms take the perturbed share
        return subgraph_sample(g, 1.0 - ratio, rng)
    return TRANSFORMS[kind](g, ratio, rng)


def uppg_sample(g: Graph, config: UPPGConfig, rng: np.random.Generator, anchor_index: int = 0) -> CandidateSet:
    """Draw ``config.c`` views of ``g``, each from a transform picked by the mixture."""
    config.validate()
    kinds = config.kinds
    picks = rng.choice(len(kinds), size=config.c, p=config.probabilities)
    seeds = rng.integers(0, 2**63 - 1, size=config.c, dtype=np.int64)
    views = [
        apply_transform(kinds[q], g, config.ratio, np.random.default_rng(int(s)))
        for q, s in zip(picks, seeds)
    ]
    return CandidateSet(anchor_index, views, np.array([kinds[q].value for q in picks]), seeds)
