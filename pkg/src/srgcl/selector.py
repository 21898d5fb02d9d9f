"""Latent-space positive selection: distances, top-k and annealed Boltzmann sampling."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import log_softmax, softmax


class DistanceKind(str, enum.Enum):
    L2 = "l2"
    COSINE = "cos"
    KL = "kl"
    WASSERSTEIN = "wd"

    @classmethod
    def parse(cls, text: str) -> "DistanceKind":
        key = text.strip().lower()
        aliases = {"euclidean": "l2", "cosine": "cos", "wasserstein": "wd"}
        return cls(aliases.get(key, key))


class SelectionMode(str, enum.Enum):
    TOPK = "topk"
    PROBABILISTIC = "prob"
    RANDOM = "random"

    @classmethod
    def parse(cls, text: str) -> "SelectionMode":
        key = text.strip().lower()
        aliases = {"probabilistic": "prob", "top-k": "topk"}
        return cls(aliases.get(key, key))


@dataclass
class SelectorConfig:
    mode: SelectionMode = SelectionMode.TOPK
    k: int = 2
    distance: DistanceKind = DistanceKind.L2
    t0: float = 1.0
    s: float = 0.4

    def validate(self, c: Optional[int] = None) -> None:
        if self.k < 1:
            raise ValueError("selector.k must be >= 1")
        if c is not None and self.k > c:
            raise ValueError(f"selector.k ({self.k}) must be <= uppg.c ({c})")
        if not self.t0 > 0:
            raise ValueError("selector.t0 must be > 0")
        if self.s < 0:
            raise ValueError("selector.s must be >= 0")

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "k": self.k, "distance": self.distance.value, "t0": self.t0, "s": self.s}

    @classmethod
    def from_dict(cls, d: dict) -> "SelectorConfig":
        return cls(SelectionMode.parse(d["mode"]), d["k"], DistanceKind.parse(d["distance"]), d["t0"], d["s"])


@dataclass
class SelectionResult:
    chosen: np.ndarray
    probabilities: np.ndarray
    distances: Optional[np.ndarray] = None
    temperature: Optional[float] = None

    def __post_init__(self) -> None:
        self.chosen = np.asarray(self.chosen, dtype=np.int64)


def distances(anchor: np.ndarray, candidates: np.ndarray, kind: DistanceKind) -> np.ndarray:
    """Distance from ``anchor`` to every row of ``candidates``.

    KL and Wasserstein treat both vectors as softmax distributions; the
    Wasserstein value is the 1-D transport cost between the two CDFs.
    """
    kind = DistanceKind(kind)
    a = np.asarray(anchor, dtype=np.float64)
    b = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if a.ndim != 1 or b.shape[1] != a.shape[0]:
        raise ValueError(f"dimension mismatch: anchor {a.shape} vs candidates {b.shape}")
    if kind is DistanceKind.L2:
        return np.linalg.norm(b - a, axis=1)
    if kind is DistanceKind.COSINE:
        na, nb = np.linalg.norm(a), np.linalg.norm(b, axis=1)
        if na == 0 or np.any(nb == 0):
            raise ValueError("cosine distance of a zero vector")
        cos = (b @ a) / (nb * na)
        return np.maximum(1.0 - cos, 0.0)
    if kind is DistanceKind.KL:
        log_p = log_softmax(a)
        log_q = log_softmax(b, axis=1)
        return np.maximum(np.sum(np.exp(log_p) * (log_p - log_q), axis=1), 0.0)
    cdf_p = np.cumsum(softmax(a))
    cdf_q = np.cumsum(softmax(b, axis=1), axis=1)
    return np.sum(np.abs(cdf_p - cdf_q), axis=1)


def distance(a: np.ndarray, b: np.ndarray, kind: DistanceKind = DistanceKind.L2) -> float:
    return float(distances(a, np.asarray(b)[None, :], kind)[0])


def temperature(t: float, t0: float, s: float) -> float:
    """Exponentially decayed temperature ``t0 * exp(-s * t)``."""
    if t < 0:
        raise ValueError("epoch index must be non-negative")
    return t0 * math.exp(-s * t)


def _stable_order(d: np.ndarray) -> np.ndarray:
    return np.argsort(d, kind="stable")


def topk_from_distances(d: np.ndarray, k: int) -> SelectionResult:
    if not 1 <= k <= len(d):
        raise ValueError(f"k={k} out of range for {len(d)} candidates")
    return SelectionResult(_stable_order(d)[:k], np.full(len(d), 1.0 / len(d)), d)


def topk_select(anchor, candidates, k: int, kind: DistanceKind = DistanceKind.L2) -> SelectionResult:
    """The ``k`` nearest candidates, nearest first; ties go to the lower index."""
    return topk_from_distances(distances(anchor, candidates, kind), k)


def boltzmann_from_distances(d: np.ndarray, T: float) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if not T > 0:
        raise ValueError("temperature must be positive")
    if len(d) == 0 or not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite and non-empty")
    w = np.exp(-(d - d.min()) / T)
    return w / w.sum()


def boltzmann_probabilities(anchor, candidates, kind: DistanceKind, T: float) -> np.ndarray:
    """Softmax of ``-distance / T`` over the candidates."""
    return boltzmann_from_distances(distances(anchor, candidates, kind), T)


def _draw(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)


def sample_without_replacement(probs: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Sequential draws, renormalizing over the remaining candidates after each."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 1 <= k <= len(probs):
        raise ValueError(f"k={k} out of range for {len(probs)} candidates")
    remaining = np.arange(len(probs))
    chosen = []
    for _ in range(k):
        j = _draw(probs[remaining] / probs[remaining].sum(), rng)
        chosen.append(remaining[j])
        remaining = np.delete(remaining, j)
    return np.array(chosen, dtype=np.int64)


def probabilistic_from_distances(d, config: SelectorConfig, t: int, rng: np.random.Generator) -> SelectionResult:
    d = np.asarray(d, dtype=np.float64)
    if not 1 <= config.k <= len(d):
        raise ValueError(f"k={config.k} out of range for {len(d)} candidates")
    T = temperature(t, config.t0, config.s)
    probs = boltzmann_from_distances(d, T)
    # renormalizing probs over the survivors equals a fresh min-shifted softmax of
    # their distances; recomputing keeps later draws from underflowing at small T
    remaining = np.arange(len(d))
    chosen = []
    for _ in range(config.k):
        j = _draw(boltzmann_from_distances(d[remaining], T), rng)
        chosen.append(remaining[j])
        remaining = np.delete(remaining, j)
    return SelectionResult(np.array(chosen), probs, d, T)


def probabilistic_select(anchor, candidates, config: SelectorConfig, t: int, rng: np.random.Generator) -> SelectionResult:
    """Draw ``k`` candidates from the Boltzmann distribution at temperature ``T(t)``."""
    return probabilistic_from_distances(distances(anchor, candidates, config.distance), config, t, rng)


def random_select(count: int, k: int, rng: np.random.Generator) -> SelectionResult:
    if not 1 <= k <= count:
        raise ValueError(f"k={k} out of range for {count} candidates")
    return SelectionResult(rng.choice(count, k, replace=False), np.full(count, 1.0 / count))


def select(anchor, candidates, config: SelectorConfig, t: int, rng: np.random.Generator) -> SelectionResult:
    """Dispatch on ``config.mode``."""
    mode = SelectionMode(config.mode)
    if mode is SelectionMode.RANDOM:
        return random_select(len(candidates), config.k, rng)
    d = distances(anchor, candidates, config.distance)
    if mode is SelectionMode.TOPK:
        return topk_from_distances(d, config.k)
    return probabilistic_from_distances(d, config, t, rng)


def label_precision(chosen_labels: np.ndarray, anchor_label: int) -> float:
    return float(np.mean(np.asarray(chosen_labels) == anchor_label))
