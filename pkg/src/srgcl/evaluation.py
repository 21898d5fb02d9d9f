"""Linear-probe evaluation with repeated stratified cross-validation."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import log_softmax

from .encoder import EncoderConfig, EncoderParams, encode_batch
from .graph import GraphDataset, stratified_kfold
from .selector import SelectionMode
from .trainer import OraclePositives, TrainConfig, train

logger = logging.getLogger(__name__)


class SingleClassFold(ValueError):
    pass


@dataclass
class LinearProbe:
    mean: np.ndarray
    scale: np.ndarray
    weights: np.ndarray
    bias: np.ndarray

    def decision(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.mean) / self.scale) @ self.weights + self.bias

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision(np.asarray(x, dtype=np.float64)), axis=1)

    def accuracy(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.predict(x) == np.asarray(y)))


def fit_linear_probe(x, y, l2: float = 1e-3, iters: int = 500, num_classes: Optional[int] = None) -> LinearProbe:
    """Multinomial logistic regression by full-batch accelerated gradient descent.

    Features are standardized with the training statistics; weights start at
    zero and the step size is the inverse of a Lipschitz bound on the
    gradient, so the fit is deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise SingleClassFold("linear probe needs at least two classes in the training data")
    n_cls = int(num_classes if num_classes is not None else y.max() + 1)
    mean = x.mean(0)
    scale = x.std(0)
    scale[scale < 1e-12] = 1.0
    xs = (x - mean) / scale
    n, d = xs.shape
    xb = np.hstack([xs, np.ones((n, 1))])
    onehot = np.eye(n_cls)[y]
    lipschitz = 0.5 * np.linalg.norm(xb, 2) ** 2 / n + l2
    step = 1.0 / lipschitz
    reg = np.ones((d + 1, 1))
    reg[-1] = 0.0  # bias is not penalized
    theta = np.zeros((d + 1, n_cls))
    look = theta.copy()
    for it in range(iters):
        prob = np.exp(log_softmax(xb @ look, axis=1))
        grad = xb.T @ (prob - onehot) / n + l2 * reg * look
        nxt = look - step * grad
        look = nxt + (it / (it + 3.0)) * (nxt - theta)
        theta = nxt
    return LinearProbe(mean, scale, theta[:-1], theta[-1])


@dataclass
class EvalReport:
    """Accuracy grid of ``repeats x folds`` plus aggregates.

    ``mean`` is the mean of the per-repeat means and ``std`` their population
    standard deviation.
    """

    accuracies: np.ndarray
    fingerprint: str = ""
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.accuracies = np.atleast_2d(np.asarray(self.accuracies, dtype=np.float64))

    @property
    def repeat_means(self) -> np.ndarray:
        return self.accuracies.mean(axis=1)

    @property
    def mean(self) -> float:
        return float(self.repeat_means.mean())

    @property
    def std(self) -> float:
        return float(self.repeat_means.std())

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "accuracies": self.accuracies.tolist(),
            "repeat_means": self.repeat_means.tolist(),
            "mean": self.mean,
            "std": self.std,
            "fingerprint": self.fingerprint,
            "extra": self.extra,
        }
        if timing:
            d["seconds"] = self.seconds
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(np.array(d["accuracies"]), d.get("fingerprint", ""), d.get("seconds", 0.0), d.get("extra", {}))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["repeat", "fold", "accuracy"])
        for r, row in enumerate(self.accuracies):
            for f, acc in enumerate(row):
                writer.writerow([r, f, repr(float(acc))])
        return buf.getvalue()

    def summary(self) -> str:
        return f"{100 * self.mean:.2f} +- {100 * self.std:.2f}"


def fingerprint(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:12]


def fold_accuracies(embeddings: np.ndarray, labels: np.ndarray, folds: int, seed: int, l2=1e-3, iters=500):
    split = stratified_kfold(labels, folds, seed)
    n_cls = int(labels.max() + 1)
    row = []
    for f in range(folds):
        train_idx, test_idx = split.train_indices(f), split.test_indices(f)
        probe = fit_linear_probe(embeddings[train_idx], labels[train_idx], l2, iters, n_cls)
        row.append(probe.accuracy(embeddings[test_idx], labels[test_idx]))
    return row


def embed_dataset(dataset: GraphDataset, params: EncoderParams, output: str = "graph", chunk: int = 512) -> np.ndarray:
    graphs = dataset.graphs
    return np.vstack([encode_batch(graphs[i : i + chunk], params, output) for i in range(0, len(graphs), chunk)])


def kfold_evaluate(
    dataset: GraphDataset,
    params: EncoderParams,
    folds: int = 10,
    repeats: int = 5,
    seed: int = 0,
    output: str = "graph",
) -> EvalReport:
    """Evaluate frozen ``params`` with ``repeats`` independent stratified k-fold splits."""
    if folds < 2 or repeats < 1:
        raise ValueError("need folds >= 2 and repeats >= 1")
    start = time.perf_counter()
    emb = embed_dataset(dataset, params, output)
    labels = dataset.labels
    grid = [fold_accuracies(emb, labels, folds, seed + r) for r in range(repeats)]
    return EvalReport(np.array(grid), fingerprint({"params": fingerprint(params.vector.tobytes().hex())}),
                      time.perf_counter() - start)


def train_and_evaluate(
    dataset: GraphDataset,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
    folds: int = 10,
    repeats: int = 5,
    seed: Optional[int] = None,
    oracle: bool = False,
    checkpoint_hook=None,
) -> tuple[EvalReport, list]:
    """Repeat ``train + k-fold probe`` ``repeats`` times with seeds ``seed + r``.

    Every ``eval_every`` epochs the current encoder is scored; the last
    evaluation forms the primary grid and the best checkpoint mean is kept
    in ``extra``. Returns the report and the per-repeat training traces.
    """
    base = train_config.seed if seed is None else seed
    start = time.perf_counter()
    labels = dataset.labels
    rows, traces = [], []
    by_epoch: dict[int, list] = {}
    for r in range(repeats):
        cfg = TrainConfig.from_dict({**train_config.to_dict(), "seed": base + r})
        rows_here: dict[int, list] = {}

        def on_eval(epoch, params, r=r, rows_here=rows_here):
            emb = embed_dataset(dataset, params)
            rows_here[epoch] = fold_accuracies(emb, labels, folds, base + r)
            if checkpoint_hook is not None:
                checkpoint_hook(r, epoch, params)

        helper = OraclePositives(dataset) if oracle else None
        _, trace = train(dataset, encoder_config, cfg, on_eval=on_eval, oracle=helper)
        if helper is not None and helper.fallbacks:
            logger.info("oracle arm: %d anchors fell back to augmented positives", helper.fallbacks)
        last = max(rows_here)
        rows.append(rows_here[last])
        for epoch, row in rows_here.items():
            by_epoch.setdefault(epoch, []).append(row)
        traces.append(trace)
    checkpoints = {int(e): float(np.mean(v)) for e, v in sorted(by_epoch.items())}
    extra = {
        "eval_epochs": sorted(checkpoints),
        "checkpoint_means": checkpoints,
        "last_mean": checkpoints[max(checkpoints)],
        "best_mean": max(checkpoints.values()),
        "best_epoch": max(checkpoints, key=checkpoints.get),
        "oracle": oracle,
    }
    spec = {"encoder": encoder_config.__dict__, "train": train_config.to_dict(), "folds": folds,
            "repeats": repeats, "seed": base, "oracle": oracle}
    report = EvalReport(np.array(rows), fingerprint(spec), time.perf_counter() - start, extra)
    return report, traces


def oracle_positive_experiment(
    dataset: GraphDataset,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
    seed: int = 0,
    folds: int = 10,
    repeats: int = 5,
) -> tuple[EvalReport, EvalReport]:
    """Random-augmentation positives versus same-label positives, identical seeds.

    Arm (a) is the random-selection baseline; arm (b) replaces each anchor's
    positives by uniformly drawn other graphs of its class.
    """
    base = TrainConfig.from_dict(train_config.to_dict())
    base.selector.mode = SelectionMode.RANDOM
    arm_a, _ = train_and_evaluate(dataset, encoder_config, base, folds, repeats, seed)
    arm_b, _ = train_and_evaluate(dataset, encoder_config, base, folds, repeats, seed, oracle=True)
    return arm_a, arm_b


def paired_wins(a: Sequence[float], b: Sequence[float]) -> int:
    """How many paired entries have ``a >= b``."""
    return int(np.sum(np.asarray(a) >= np.asarray(b)))
