"""Self-reinforced contrastive training loop.

Each minibatch alternates a hard E-step (generate candidate views, embed
them with the current encoder, keep ``k`` per anchor) with an M-step (one
Adam update on the contrastive loss over the kept positives).
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .augment import CandidateSet, UPPGConfig, uppg_sample
from .encoder import EncoderConfig, EncoderParams, NonFiniteLossError, encode_batch, forward_backward, init_params
from .graph import Graph, GraphDataset
from .objective import LossConfig, info_nce_pairs
from .selector import DistanceKind, SelectionMode, SelectorConfig, distances, random_select, select, temperature

logger = logging.getLogger(__name__)

PHASES = ("generate", "encode", "select", "step")


class PairMode(str, enum.Enum):
    ANCHOR_VIEW = "anchor-view"
    VIEW_VIEW = "view-view"

    @classmethod
    def parse(cls, text: str) -> "PairMode":
        key = text.strip().lower().replace("_", "-")
        return cls({"anchorview": "anchor-view", "viewview": "view-view"}.get(key, key))


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    pair_mode: PairMode = PairMode.ANCHOR_VIEW
    loss: LossConfig = field(default_factory=LossConfig)
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    uppg: UPPGConfig = field(default_factory=UPPGConfig)
    eval_every: int = 10
    cache_candidates: bool = False
    # embedding the selector measures distances in: "projection" (head output) or "graph" (pooled, pre-head)
    selection_space: str = "projection"

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("train.epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("train.batch_size must be >= 2 (negatives come from the batch)")
        if not self.learning_rate > 0:
            raise ValueError("train.learning_rate must be > 0")
        if not 1 <= self.eval_every <= self.epochs:
            raise ValueError(f"train.eval_every ({self.eval_every}) must lie in [1, epochs={self.epochs}]")
        self.loss.validate()
        self.selector.validate(self.uppg.c)
        self.uppg.validate(self.selector.k)
        if self.selection_space not in ("projection", "graph"):
            raise ValueError("train.selection_space must be 'projection' or 'graph'")
        if PairMode(self.pair_mode) is PairMode.VIEW_VIEW and self.selector.k < 2:
            raise ValueError("pair_mode view-view requires selector.k >= 2")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "pair_mode": PairMode(self.pair_mode).value,
            "loss": asdict(self.loss),
            "selector": self.selector.to_dict(),
            "uppg": self.uppg.to_dict(),
            "eval_every": self.eval_every,
            "cache_candidates": self.cache_candidates,
            "selection_space": self.selection_space,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["pair_mode"] = PairMode.parse(d.get("pair_mode", "anchor-view"))
        d["loss"] = LossConfig(**d.get("loss", {}))
        d["selector"] = SelectorConfig.from_dict(d["selector"]) if "selector" in d else SelectorConfig()
        d["uppg"] = UPPGConfig.from_dict(d["uppg"]) if "uppg" in d else UPPGConfig()
        return cls(**d)


@dataclass
class TrainTrace:
    epoch_loss: list = field(default_factory=list)
    temperature: list = field(default_factory=list)
    mean_chosen_distance: list = field(default_factory=list)
    kind_counts: list = field(default_factory=list)
    positives_per_anchor: list = field(default_factory=list)
    steps: int = 0
    epoch_seconds: list = field(default_factory=list)
    phase_seconds: list = field(default_factory=list)

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("epoch_seconds")
            d.pop("phase_seconds")
        return d


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def optimizer_step(params: EncoderParams, gradient: np.ndarray, state: AdamState, lr: float):
    """One bias-corrected Adam update, applied to ``params.vector`` in place."""
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != params.vector.shape:
        raise ValueError(f"gradient shape {gradient.shape} != parameter shape {params.vector.shape}")
    if not np.all(np.isfinite(gradient)):
        raise FloatingPointError("non-finite gradient entries")
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * gradient
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * gradient * gradient
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    params.vector -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def _minibatches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        tail = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], tail])
    return chunks


def anchor_rng(seed: int, epoch: int, anchor: int, stream: int) -> np.random.Generator:
    """Independent generator keyed by (seed, epoch, anchor, stream)."""
    return np.random.default_rng([seed, epoch, anchor, stream])


class OraclePositives:
    """Positives drawn uniformly from other graphs sharing the anchor's label.

    Labels only decide which graphs are paired; they never enter the loss.
    Anchors whose class has fewer than ``k`` other members fall back to the
    augmentation pipeline.
    """

    def __init__(self, dataset: GraphDataset):
        labels = dataset.labels
        self.dataset = dataset
        self.members = {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}
        self.labels = labels
        self.fallbacks = 0

    def draw(self, anchor: int, k: int, rng: np.random.Generator) -> Optional[list[Graph]]:
        pool = self.members[int(self.labels[anchor])]
        pool = pool[pool != anchor]
        if len(pool) < k:
            self.fallbacks += 1
            return None
        return [self.dataset.graphs[j] for j in rng.choice(pool, k, replace=False)]


def train(
    dataset: GraphDataset,
    encoder_config: EncoderConfig,
    config: TrainConfig,
    on_eval: Optional[Callable[[int, EncoderParams], None]] = None,
    oracle: Optional[OraclePositives] = None,
    init: Optional[EncoderParams] = None,
) -> tuple[EncoderParams, TrainTrace]:
    """Train an encoder on ``dataset`` without labels.

    ``on_eval(epoch, params)`` is called after every ``eval_every``-th epoch
    (1-based epoch count). ``oracle`` swaps augmented positives for
    same-label graphs and exists only for the oracle-positive experiment.
    """
    config.validate()
    encoder_config.validate()
    if len(dataset) < 2:
        raise ValueError("training needs at least two graphs")
    params = init.copy() if init is not None else init_params(encoder_config, dataset.d_feat, config.seed)
    state = AdamState.zeros(len(params))
    trace = TrainTrace()
    sel = config.selector
    mode = SelectionMode(sel.mode)
    space = config.selection_space
    k = sel.k
    view_view = PairMode(config.pair_mode) is PairMode.VIEW_VIEW
    cached: dict[int, CandidateSet] = {}
    graphs = dataset.graphs

    for epoch in range(config.epochs):
        t_epoch = time.perf_counter()
        phases = dict.fromkeys(PHASES, 0.0)
        T = temperature(epoch, sel.t0, sel.s)
        order = np.random.default_rng([config.seed, epoch, 2**31]).permutation(len(graphs))
        losses, chosen_dist, counts, per_anchor = [], [], {}, []

        for b, idx in enumerate(_minibatches(order, config.batch_size)):
            anchors = [graphs[i] for i in idx]
            positives: list[list[Graph]] = []
            pos_kinds: list[list[str]] = []

            # E-step: candidate generation and selection
            t0 = time.perf_counter()
            need_views = []
            for i in idx:
                drawn = oracle.draw(int(i), k, anchor_rng(config.seed, epoch, int(i), 1)) if oracle else None
                if drawn is not None:
                    positives.append(drawn)
                    pos_kinds.append(["oracle"] * k)
                    need_views.append(None)
                    continue
                if config.cache_candidates and int(i) in cached:
                    cands = cached[int(i)]
                else:
                    cands = uppg_sample(graphs[i], config.uppg, anchor_rng(config.seed, epoch, int(i), 0), int(i))
                    if config.cache_candidates:
                        cached[int(i)] = cands
                positives.append([])
                pos_kinds.append([])
                need_views.append(cands)
            phases["generate"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            z_anchor = encode_batch(anchors, params, space)
            with_views = [j for j, cs in enumerate(need_views) if cs is not None]
            z_views = None
            if with_views and mode is not SelectionMode.RANDOM:
                z_views = encode_batch([v for j in with_views for v in need_views[j].views], params, space)
            phases["encode"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            offset = 0
            for j in with_views:
                cands = need_views[j]
                rng = anchor_rng(config.seed, epoch, int(idx[j]), 2)
                zc = z_views[offset : offset + len(cands)] if z_views is not None else None
                offset += len(cands)
                if zc is None:
                    result = random_select(len(cands), k, rng)
                else:
                    result = select(z_anchor[j], zc, sel, epoch, rng)
                positives[j] = [cands.views[c] for c in result.chosen]
                pos_kinds[j] = [str(cands.kinds[c]) for c in result.chosen]
                if result.distances is not None:
                    chosen_dist.extend(result.distances[result.chosen].tolist())
            phases["select"] += time.perf_counter() - t0

            if mode is SelectionMode.RANDOM or oracle is not None:
                # positives that never went through the selector still get a distance record
                t0 = time.perf_counter()
                rows = [j for j in range(len(idx)) if mode is SelectionMode.RANDOM or j not in with_views]
                if rows:
                    zp = encode_batch([q for j in rows for q in positives[j]], params, space)
                    for r, j in enumerate(rows):
                        block = zp[r * k : (r + 1) * k]
                        chosen_dist.extend(distances(z_anchor[j], block, DistanceKind(sel.distance)).tolist())
                phases["encode"] += time.perf_counter() - t0

            for kinds in pos_kinds:
                per_anchor.append(len(kinds))
                for kind in kinds:
                    counts[kind] = counts.get(kind, 0) + 1

            # M-step: contrastive update over the kept positives
            t0 = time.perf_counter()
            if view_view:
                first = [p[0] for p in positives]
                rest = [q for p in positives for q in p[1:]]
                n_rest = k - 1
            else:
                first = anchors
                rest = [q for p in positives for q in p]
                n_rest = k
            owner = np.repeat(np.arange(len(idx)), n_rest)
            weights = np.full(len(owner), 1.0 / n_rest)
            n_first = len(first)

            def tail(z, owner=owner, weights=weights, n_first=n_first):
                return info_nce_pairs(z[:n_first], z[n_first:], owner, config.loss, weights, grad=True)

            try:
                loss, grad = forward_backward(first + rest, params, tail)
                optimizer_step(params, grad, state, config.learning_rate)
            except (NonFiniteLossError, FloatingPointError) as exc:
                raise TrainingDiverged(f"epoch {epoch}, batch {b}, temperature {T:.6g}: {exc}") from exc
            trace.steps += 1
            losses.append(loss)
            phases["step"] += time.perf_counter() - t0

        trace.epoch_loss.append(float(np.mean(losses)))
        trace.temperature.append(T)
        trace.mean_chosen_distance.append(float(np.mean(chosen_dist)) if chosen_dist else 0.0)
        trace.kind_counts.append(dict(sorted(counts.items())))
        trace.positives_per_anchor.append(sorted(set(per_anchor)))
        trace.epoch_seconds.append(time.perf_counter() - t_epoch)
        trace.phase_seconds.append(phases)
        logger.debug("epoch %d loss %.5f T %.4g", epoch, trace.epoch_loss[-1], T)
        if on_eval is not None and ((epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs):
            on_eval(epoch + 1, params)
    return params, trace
