import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from srgcl.augment import (
    DEFAULT_KINDS,
    AugKind,
    UPPGConfig,
    attr_mask,
    edge_perturb,
    node_drop,
    subgraph_sample,
    uppg_sample,
)
from srgcl.graph import Graph

from conftest import complete_graph, cycle_graph, path_graph, random_graph


def _rng(seed=0):
    return np.random.default_rng(seed)


def _valid(g):
    g.validate()
    a = g.adjacency()
    return np.array_equal(a, a.T) and not np.any(np.diag(a))


class TestNodeDrop:
    def test_zero_ratio_identity(self):
        g = random_graph(_rng(1))
        assert node_drop(g, 0.0, _rng()).same_as(g)

    def test_floor_count(self):
        g = path_graph(10)
        assert node_drop(g, 0.2, _rng()).node_count == 8

    def test_path_middle_drop_oracle(self):
        # every single-node drop of 0-1-2, compared with restrict-and-reindex by hand
        g = path_graph(3)
        expected = {0: [[0, 1]], 1: [], 2: [[0, 1]]}
        seen = set()
        for seed in range(200):
            out = node_drop(g, 0.34, _rng(seed))
            assert out.node_count == 2
            seen.add(out.edge_count)
            assert out.edges.tolist() in expected.values()
        assert seen == {0, 1}

    def test_keeps_one_node(self):
        g = path_graph(2)
        assert node_drop(g, 0.99, _rng()).node_count == 1

    def test_rejects_ratio(self):
        with pytest.raises(ValueError):
            node_drop(path_graph(3), 1.0, _rng())

    def test_features_follow_survivors(self):
        g = Graph(4, [(0, 1), (2, 3)], np.arange(4.0)[:, None])
        out = node_drop(g, 0.5, _rng(5))
        assert set(out.features[:, 0]).issubset({0.0, 1.0, 2.0, 3.0})
        assert np.all(np.diff(out.features[:, 0]) > 0)


class TestEdgePerturb:
    def test_zero_ratio_identity(self):
        g = random_graph(_rng(2))
        assert edge_perturb(g, 0.0, _rng()).same_as(g)

    def test_complete_graph_only_drops(self):
        g = complete_graph(6)
        out = edge_perturb(g, 0.25, _rng())
        assert out.edge_count == g.edge_count - math.floor(0.25 * g.edge_count)

    def test_four_cycle_outcomes(self):
        g = cycle_graph(4)
        original = g.edge_set()
        chords = {(0, 2), (1, 3)}
        outcomes = {(frozenset(original - {e}) | {c}) for e in original for c in chords}
        for seed in range(100):
            out = edge_perturb(g, 0.25, _rng(seed))
            assert out.edge_count == 4
            assert frozenset(out.edge_set()) in outcomes

    def test_preserves_nodes_and_features(self):
        g = random_graph(_rng(4), n_max=15)
        out = edge_perturb(g, 0.5, _rng())
        assert out.node_count == g.node_count
        np.testing.assert_array_equal(out.features, g.features)

    def test_added_pairs_uniform(self):
        # a 4-node star leaves 3 non-edges; each should be added equally often
        g = Graph(4, [(0, 1), (0, 2), (0, 3)], np.ones((4, 1)))
        counts = {}
        for seed in range(3000):
            out = edge_perturb(g, 0.34, _rng(seed))
            for e in out.edge_set() - g.edge_set():
                counts[e] = counts.get(e, 0) + 1
        assert set(counts) == {(1, 2), (1, 3), (2, 3)}
        assert chisquare(list(counts.values())).pvalue > 0.01


class TestAttrMask:
    def test_zero_ratio_identity(self):
        g = random_graph(_rng(3))
        assert attr_mask(g, 0.0, _rng()).same_as(g)

    def test_two_rows(self):
        g = Graph(5, [], np.full((5, 3), 2.0))
        out = attr_mask(g, 0.4, _rng())
        assert np.sum(np.all(out.features == 0, axis=1)) == 2

    def test_row_sum_drops(self):
        d = 4
        g = Graph(5, [], np.ones((5, d)))
        assert attr_mask(g, 0.4, _rng()).features.sum() == 3 * d

    def test_featureless_rejected(self):
        with pytest.raises(ValueError):
            attr_mask(Graph(2, [], np.zeros((2, 0))), 0.5, _rng())


class TestSubgraph:
    def test_full_ratio_connected(self):
        g = path_graph(7)
        assert subgraph_sample(g, 1.0, _rng()).same_as(g)

    def test_triangle_two_thirds(self):
        g = complete_graph(3)
        for seed in range(50):
            out = subgraph_sample(g, 2 / 3, _rng(seed))
            assert out.node_count == 2
            np.testing.assert_array_equal(out.edges, [[0, 1]])

    def test_disconnected_falls_short(self):
        g = Graph(4, [(0, 1), (2, 3)], np.ones((4, 1)))
        out = subgraph_sample(g, 1.0, _rng())
        assert out.node_count == 2

    def test_rejects_ratio(self):
        with pytest.raises(ValueError):
            subgraph_sample(path_graph(3), 0.0, _rng())


class TestInvariants:
    @settings(max_examples=150, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), ratio=st.floats(0.0, 0.95))
    def test_transform_outputs_valid(self, seed, ratio):
        rng = _rng(seed)
        g = random_graph(rng, n_max=14)
        n, m = g.node_count, g.edge_count
        nd = node_drop(g, ratio, rng)
        assert nd.node_count == n - min(math.floor(ratio * n), n - 1)
        ep = edge_perturb(g, ratio, rng)
        assert ep.node_count == n
        r = math.floor(ratio * m)
        assert len(g.edge_set() - ep.edge_set()) == r
        am = attr_mask(g, ratio, rng)
        np.testing.assert_array_equal(am.edges, g.edges)
        sg = subgraph_sample(g, max(1.0 - ratio, 0.05), rng)
        for out in (nd, ep, am, sg):
            assert _valid(out)


class TestUPPG:
    def test_default_excludes_subgraph(self):
        cfg = UPPGConfig()
        assert AugKind.SUBGRAPH not in cfg.kinds
        assert tuple(cfg.kinds) == DEFAULT_KINDS
        np.testing.assert_allclose(cfg.probabilities.sum(), 1.0)

    def test_degenerate_categorical(self):
        cfg = UPPGConfig([(AugKind.NODE_DROP, 1.0), (AugKind.EDGE_PERTURB, 0.0), (AugKind.ATTR_MASK, 0.0)], 0.2, 20)
        cands = uppg_sample(random_graph(_rng(1)), cfg, _rng())
        assert set(cands.kinds.tolist()) == {"N"}

    def test_candidate_count(self):
        cands = uppg_sample(random_graph(_rng(1)), UPPGConfig(c=50), _rng())
        assert len(cands) == 50
        assert len(cands.provenance()) == 50
        for v in cands.views:
            assert _valid(v)

    def test_kind_frequencies(self):
        cfg = UPPGConfig([(AugKind.NODE_DROP, 0.5), (AugKind.ATTR_MASK, 0.5)], 0.2, 2000)
        cands = uppg_sample(random_graph(_rng(7), n_max=5), cfg, _rng(11))
        counts = [np.sum(cands.kinds == "N"), np.sum(cands.kinds == "A")]
        assert chisquare(counts).pvalue > 0.01

    def test_reproducible(self):
        g = random_graph(_rng(9))
        a = uppg_sample(g, UPPGConfig(c=10), _rng(3))
        b = uppg_sample(g, UPPGConfig(c=10), _rng(3))
        assert all(x.same_as(y) for x, y in zip(a.views, b.views))
        np.testing.assert_array_equal(a.seeds, b.seeds)

    def test_validation(self):
        with pytest.raises(ValueError, match="sum to 1"):
            UPPGConfig([(AugKind.NODE_DROP, 0.7)]).validate()
        with pytest.raises(ValueError, match="selector.k"):
            UPPGConfig(c=2).validate(k=3)

    def test_dict_round_trip(self):
        cfg = UPPGConfig.uniform(["N", "E"], 0.1, 7)
        assert UPPGConfig.from_dict(cfg.to_dict()) == cfg

    def test_parse_aliases(self):
        assert AugKind.parse("node_drop") is AugKind.NODE_DROP
        assert AugKind.parse("e") is AugKind.EDGE_PERTURB
