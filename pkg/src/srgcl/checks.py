"""Self-contained numerical checks used by ``selftest`` and the acceptance suite.

Every routine takes a seed, is deterministic, and returns a JSON-friendly
dict with the measured numbers plus a ``passed`` flag. Timing is reported
under ``seconds`` and is the only field allowed to differ between reruns.
"""

from __future__ import annotations

import math
import time

import numpy as np
from scipy.stats import chisquare

from .augment import attr_mask, edge_perturb, node_drop
from .encoder import EncoderConfig, gradient_check
from .graph import Graph, synth_latent_clusters
from .objective import em_responsibilities
from .selector import (
    DistanceKind,
    SelectionMode,
    SelectorConfig,
    boltzmann_from_distances,
    distances,
    probabilistic_from_distances,
    random_select,
    temperature,
    topk_from_distances,
)


def _random_graph(rng: np.random.Generator, max_nodes: int = 20, d_feat: int = 3) -> Graph:
    n = int(rng.integers(2, max_nodes + 1))
    p = rng.uniform(0.1, 0.6)
    iu = np.triu_indices(n, 1)
    mask = rng.random(len(iu[0])) < p
    edges = np.stack([iu[0][mask], iu[1][mask]], axis=1)
    return Graph(n, edges, rng.standard_normal((n, d_feat)) + 2.0)


def _graph_ok(g: Graph) -> bool:
    a = g.adjacency()
    return bool(np.array_equal(a, a.T) and np.all(np.diag(a) == 0))


def property_suite(seed: int = 0, instances: int = 1000) -> dict:
    """Softmax, temperature, top-k, cardinality, augmentation and EM invariants."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    softmax_err = scale_err = 0.0
    topk_mismatch = card_fail = 0
    for _ in range(instances):
        c = int(rng.integers(1, 60))
        # integer-valued distances force ties so the tie rule is exercised
        d = rng.integers(0, 8, c).astype(float) if rng.random() < 0.3 else rng.exponential(2.0, c)
        T = float(rng.uniform(0.01, 5.0))
        p = boltzmann_from_distances(d, T)
        softmax_err = max(softmax_err, abs(p.sum() - 1.0))
        alpha = float(rng.uniform(0.1, 10.0))
        scale_err = max(scale_err, float(np.max(np.abs(boltzmann_from_distances(alpha * d, alpha * T) - p))))
        k = int(rng.integers(1, c + 1))
        oracle = [j for _, j in sorted((float(d[j]), j) for j in range(c))[:k]]
        topk_mismatch += not np.array_equal(topk_from_distances(d, k).chosen, oracle)
        cfg = SelectorConfig(SelectionMode.PROBABILISTIC, k, DistanceKind.L2, 1.0, float(rng.uniform(0, 1)))
        for chosen in (
            probabilistic_from_distances(d, cfg, int(rng.integers(0, 30)), rng).chosen,
            random_select(c, k, rng).chosen,
            topk_from_distances(d, k).chosen,
        ):
            card_fail += not (len(chosen) == k and len(set(chosen.tolist())) == k and chosen.min() >= 0 and chosen.max() < c)

    ts = np.arange(50)
    decay = [temperature(t, 1.0, 0.4) for t in ts]
    flat = [temperature(t, 1.7, 0.0) for t in ts]
    decay_ok = bool(np.all(np.diff(decay) < 0)) and all(x == 1.7 for x in flat)

    aug_fail = 0
    for _ in range(200):
        g = _random_graph(rng)
        ratio = float(rng.uniform(0, 0.95))
        sub = rng.integers(2**31)
        nd = node_drop(g, ratio, np.random.default_rng(sub))
        aug_fail += nd.node_count != g.node_count - min(math.floor(ratio * g.node_count), g.node_count - 1)
        ep = edge_perturb(g, ratio, np.random.default_rng(sub))
        r = math.floor(ratio * g.edge_count)
        free = g.node_count * (g.node_count - 1) // 2 - g.edge_count
        removed = len(g.edge_set() - ep.edge_set())
        added = len(ep.edge_set() - g.edge_set())
        aug_fail += removed != r or added != min(r, free)
        am = attr_mask(g, ratio, np.random.default_rng(sub))
        aug_fail += int(np.sum(np.all(am.features == 0, axis=1))) != math.floor(ratio * g.node_count)
        aug_fail += not (_graph_ok(nd) and _graph_ok(ep) and _graph_ok(am))

    em_err, em_support_fail = 0.0, 0
    for _ in range(200):
        c = int(rng.integers(1, 60))
        k = int(rng.integers(1, c + 1))
        resp = em_responsibilities(topk_from_distances(rng.random(c), k), c)
        em_err = max(em_err, abs(resp.weights.sum() - 1.0))
        em_support_fail += len(resp.support) != k

    passed = (
        softmax_err <= 1e-9 and scale_err <= 1e-9 and topk_mismatch == 0 and card_fail == 0
        and decay_ok and aug_fail == 0 and em_err <= 1e-9 and em_support_fail == 0
    )
    return {
        "instances": instances,
        "softmax_max_error": softmax_err,
        "scale_invariance_max_error": scale_err,
        "temperature_schedule_ok": decay_ok,
        "topk_oracle_mismatches": topk_mismatch,
        "cardinality_failures": card_fail,
        "augmentation_failures": aug_fail,
        "em_sum_max_error": em_err,
        "em_support_failures": em_support_fail,
        "passed": bool(passed),
        "seconds": time.perf_counter() - start,
    }


def gradient_suite(seed: int = 0, trials: int = 20, tolerance: float = 1e-4) -> dict:
    """Backprop through encoder and InfoNCE against central differences."""
    start = time.perf_counter()
    worst = gradient_check(EncoderConfig(), trials, seed)
    return {"trials": trials, "max_relative_error": worst, "tolerance": tolerance,
            "passed": bool(worst < tolerance), "seconds": time.perf_counter() - start}


def sampling_suite(seed: int = 0, draws: int = 30_000, instances: int = 3, low_t_trials: int = 1000) -> dict:
    """Chi-square of k = 1 draws against the exact distribution, and the cold limit versus top-k."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    p_values = []
    for _ in range(instances):
        d = rng.uniform(0.0, 2.0, 4)
        cfg = SelectorConfig(SelectionMode.PROBABILISTIC, 1, DistanceKind.L2, 1.0, 0.0)
        exact = boltzmann_from_distances(d, 1.0)
        counts = np.zeros(4)
        for _ in range(draws):
            counts[probabilistic_from_distances(d, cfg, 0, rng).chosen[0]] += 1
        p_values.append(float(chisquare(counts, exact * draws).pvalue))

    agree = 0
    cold = SelectorConfig(SelectionMode.PROBABILISTIC, 2, DistanceKind.L2, 1.0, 50.0)
    for _ in range(low_t_trials):
        d = rng.uniform(0.0, 1.0, 10)
        got = probabilistic_from_distances(d, cold, 1, rng).chosen
        agree += np.array_equal(got, topk_from_distances(d, 2).chosen)
    rate = agree / low_t_trials
    return {
        "draws": draws,
        "chi_square_p_values": p_values,
        "min_p_value": min(p_values),
        "low_temperature_agreement": rate,
        "passed": bool(min(p_values) > 0.01 and rate > 0.999),
        "seconds": time.perf_counter() - start,
    }


def precision_suite(seed: int = 0, seeds: int = 5, anchors: int = 100, c: int = 50, k: int = 2,
                    spread: float = 0.15, dim: int = 8) -> dict:
    """Label precision of nearest-candidate selection versus random selection.

    For each anchor, ``c`` candidates are drawn uniformly from the other
    points of a two-class cluster set, so roughly half share its label.
    """
    start = time.perf_counter()
    topk_prec, rand_prec = [], []
    for s in range(seeds):
        data = synth_latent_clusters(2, anchors, dim, spread, seed + s)
        rng = np.random.default_rng([seed, s])
        n = len(data.labels)
        hits_top = hits_rand = 0
        for a in rng.choice(n, anchors, replace=False):
            pool = np.delete(np.arange(n), a)
            cand = rng.choice(pool, c, replace=False)
            d = distances(data.points[a], data.points[cand], DistanceKind.L2)
            hits_top += np.sum(data.labels[cand[topk_from_distances(d, k).chosen]] == data.labels[a])
            hits_rand += np.sum(data.labels[cand[random_select(c, k, rng).chosen]] == data.labels[a])
        topk_prec.append(hits_top / (anchors * k))
        rand_prec.append(hits_rand / (anchors * k))
    top, rand = float(np.mean(topk_prec)), float(np.mean(rand_prec))
    gain = top / rand - 1.0
    return {
        "topk_precision": top,
        "random_precision": rand,
        "relative_gain": gain,
        "passed": bool(gain >= 0.2),
        "seconds": time.perf_counter() - start,
    }


SUITES = {
    "properties": property_suite,
    "gradients": gradient_suite,
    "sampling": sampling_suite,
    "precision": precision_suite,
}


def strip_timing(result):
    """Copy of a result tree with every ``seconds`` entry removed."""
    if isinstance(result, dict):
        return {k: strip_timing(v) for k, v in result.items() if k != "seconds"}
    if isinstance(result, list):
        return [strip_timing(v) for v in result]
    return result


def run_all(seed: int = 0) -> dict:
    return {name: fn(seed) for name, fn in SUITES.items()}
