"""Contrastive objective and the hard-EM view of positive selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass
class LossConfig:
    tau: float = 0.2
    include_positive_in_denominator: bool = True

    def validate(self) -> None:
        if not self.tau > 0:
            raise ValueError(f"loss.tau must be > 0, got {self.tau}")


def _normalize(x: np.ndarray, what: str):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise FloatingPointError(f"cosine similarity undefined: zero or non-finite {what} embedding")
    return x / norms, norms


def _normalize_backward(unit: np.ndarray, norms: np.ndarray, d_unit: np.ndarray) -> np.ndarray:
    return (d_unit - unit * np.sum(unit * d_unit, axis=1, keepdims=True)) / norms


def _logsumexp(x: np.ndarray) -> np.ndarray:
    top = np.max(x, axis=-1, keepdims=True)
    return np.log(np.sum(np.exp(x - top), axis=-1)) + top[..., 0]


def _logits(a, p, owner, config: LossConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-term logits ``[positive, anchors...]`` on unit vectors; works on stacked inputs."""
    tau = config.tau
    pos = np.sum(a[..., owner, :] * p, axis=-1) / tau
    neg = (a @ np.swapaxes(a, -1, -2) / tau)[..., owner, :]
    neg[..., np.arange(len(owner)), owner] = -np.inf
    first = pos[..., None] if config.include_positive_in_denominator else np.full(pos.shape + (1,), -np.inf)
    return np.concatenate([first, neg], axis=-1), pos


def info_nce_values(anchors, positives, owner, config: LossConfig, weights=None) -> np.ndarray:
    """Loss values for stacks of problems: ``anchors`` is ``(..., B, d)``, ``positives`` ``(..., T, d)``."""
    owner = np.asarray(owner, dtype=np.int64)
    a = anchors / np.linalg.norm(anchors, axis=-1, keepdims=True)
    p = positives / np.linalg.norm(positives, axis=-1, keepdims=True)
    logits, pos = _logits(a, p, owner, config)
    w = np.ones(len(owner)) if weights is None else np.asarray(weights, dtype=np.float64)
    return ((_logsumexp(logits) - pos) @ w) / w.sum()


def info_nce_pairs(anchors, positives, owner, config: LossConfig, weights=None, grad: bool = False):
    """Weighted InfoNCE over (anchor, positive) terms.

    ``positives[t]`` is a positive of ``anchors[owner[t]]``. Each term is
    ``-log(exp(s_pos / tau) / sum)`` where the sum runs over the other
    anchors in the batch, plus the positive itself unless
    ``config.include_positive_in_denominator`` is off. The result is
    ``sum_t w_t * term_t / sum_t w_t`` (a plain mean by default).

    With ``grad=True`` returns ``(loss, d_anchors_and_positives)`` where the
    gradient is stacked in the same order as ``vstack([anchors, positives])``.
    """
    config.validate()
    anchors = np.asarray(anchors, dtype=np.float64)
    positives = np.asarray(positives, dtype=np.float64)
    owner = np.asarray(owner, dtype=np.int64)
    n_anchor = len(anchors)
    if n_anchor < 2:
        raise ValueError("InfoNCE needs at least two anchors to form negatives")
    if len(positives) != len(owner) or len(owner) == 0:
        raise ValueError("every positive needs exactly one owning anchor")
    w = np.ones(len(owner)) if weights is None else np.asarray(weights, dtype=np.float64)

    a, a_norm = _normalize(anchors, "anchor")
    p, p_norm = _normalize(positives, "positive")
    tau = config.tau
    logits, pos = _logits(a, p, owner, config)
    lse = _logsumexp(logits)
    terms = lse - pos
    total = w.sum()
    loss = float(np.dot(w, terms) / total)
    if not grad:
        return loss

    coef = (w / total)[:, None]
    g_logits = np.exp(logits - lse[:, None]) * coef
    g_pos = g_logits[:, 0] - coef[:, 0]
    g_neg = g_logits[:, 1:]
    da = np.zeros_like(a)
    np.add.at(da, owner, (g_pos[:, None] * p + g_neg @ a) / tau)
    da += g_neg.T @ a[owner] / tau
    dp = g_pos[:, None] * a[owner] / tau
    d_anchor = _normalize_backward(a, a_norm, da)
    d_pos = _normalize_backward(p, p_norm, dp)
    return loss, np.vstack([d_anchor, d_pos])


def info_nce(anchors, positives: Sequence, config: LossConfig = LossConfig()) -> float:
    """Mean InfoNCE where ``positives[i]`` holds the positive embeddings of anchor ``i``."""
    stacked, owner = [], []
    for i, group in enumerate(positives):
        group = np.atleast_2d(np.asarray(group, dtype=np.float64))
        if len(group) == 0:
            raise ValueError(f"anchor {i} has no positives")
        stacked.append(group)
        owner.extend([i] * len(group))
    return info_nce_pairs(anchors, np.vstack(stacked), owner, config)


@dataclass
class Responsibilities:
    """Hard E-step weights of one anchor over its candidate views."""

    weights: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    def as_dict(self) -> dict[int, float]:
        return {int(j): float(self.weights[j]) for j in self.support}


def em_responsibilities(selection, c: int) -> Responsibilities:
    """Weight ``1/k`` on each selected candidate and zero on the rest."""
    chosen = np.asarray(getattr(selection, "chosen", selection), dtype=np.int64)
    k = len(chosen)
    if k == 0 or k > c:
        raise ValueError(f"need 1 <= k <= c, got k={k}, c={c}")
    weights = np.zeros(c)
    weights[chosen] = 1.0 / k
    return Responsibilities(weights)


def m_step_loss(anchor_embeddings, candidate_embeddings, responsibilities, config: LossConfig = LossConfig(), grad=False):
    """Responsibility-weighted contrastive loss over each anchor's candidates.

    Only candidates with non-zero weight contribute, each with its weight.
    With hard ``1/k`` responsibilities this is the plain mean of InfoNCE over
    the selected positives.
    """
    stacked, owner, weights = [], [], []
    for i, (cands, resp) in enumerate(zip(candidate_embeddings, responsibilities)):
        r = getattr(resp, "weights", resp)
        r = np.asarray(r, dtype=np.float64)
        cands = np.asarray(cands)
        if len(r) != len(cands):
            raise ValueError(f"anchor {i}: {len(r)} responsibilities for {len(cands)} candidates")
        support = np.flatnonzero(r > 0)
        stacked.append(cands[support])
        owner.extend([i] * len(support))
        weights.extend(r[support])
    return info_nce_pairs(anchor_embeddings, np.vstack(stacked), owner, config, weights, grad)
