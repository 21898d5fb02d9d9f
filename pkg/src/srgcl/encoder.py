"""GIN-style graph encoder with sum readout, projection head and manual backprop.

All arithmetic runs in float64. Parameters live in one flat vector; the
per-unit weight matrices and bias vectors are views into it, so an optimizer
can update the vector in place.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .graph import Graph

ACTIVATIONS = ("relu", "identity")
READOUTS = ("sum", "mean")

# dense propagation is faster than scipy.sparse for the small batches used in tests
_DENSE_LIMIT = 256


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass
class EncoderConfig:
    layers: int = 3
    hidden_dim: int = 32
    embed_dim: int = 32
    epsilon: float = 0.0
    activation: str = "relu"
    mlp_layers: int = 2
    projection_layers: int = 2
    readout: str = "sum"

    def validate(self) -> None:
        for name in ("layers", "hidden_dim", "embed_dim", "mlp_layers", "projection_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"encoder.{name} must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"encoder.activation must be one of {ACTIVATIONS}")
        if self.readout not in READOUTS:
            raise ValueError(f"encoder.readout must be one of {READOUTS}")

    def unit_shapes(self, d_in: int) -> list[tuple[int, int]]:
        """(fan_in, fan_out) of every linear unit, GIN layers first, then the head."""
        shapes = []
        width = d_in
        for _ in range(self.layers):
            for _ in range(self.mlp_layers):
                shapes.append((width, self.hidden_dim))
                width = self.hidden_dim
        for j in range(self.projection_layers):
            out = self.embed_dim if j == self.projection_layers - 1 else self.hidden_dim
            shapes.append((width, out))
            width = out
        return shapes

    def parameter_count(self, d_in: int) -> int:
        return sum(i * o + o for i, o in self.unit_shapes(d_in))

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


class EncoderParams:
    """Flat parameter vector plus structured views of each linear unit."""

    def __init__(self, config: EncoderConfig, d_in: int, vector: Optional[np.ndarray] = None):
        self.config = config
        self.d_in = d_in
        self.shapes = config.unit_shapes(d_in)
        size = config.parameter_count(d_in)
        if vector is None:
            vector = np.zeros(size)
        vector = np.ascontiguousarray(vector, dtype=np.float64)
        if vector.shape != (size,):
            raise ValueError(f"expected {size} parameters, got {vector.shape}")
        self.vector = vector
        self.weights, self.biases = self._views(self.vector)

    def _views(self, flat: np.ndarray):
        weights, biases, pos = [], [], 0
        for fan_in, fan_out in self.shapes:
            weights.append(flat[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out))
            pos += fan_in * fan_out
            biases.append(flat[pos : pos + fan_out])
            pos += fan_out
        return weights, biases

    def __len__(self) -> int:
        return self.vector.size

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, self.d_in, self.vector.copy())

    def with_vector(self, vector: np.ndarray) -> "EncoderParams":
        return EncoderParams(self.config, self.d_in, vector)

    @property
    def gin_units(self) -> int:
        return self.config.layers * self.config.mlp_layers

    def save(self, path) -> None:
        """Write an ``.npz`` holding the raw vector and a JSON config header."""
        header = json.dumps({"config": asdict(self.config), "d_in": self.d_in})
        with open(path, "wb") as fh:
            np.savez(fh, vector=self.vector, header=np.array(header))

    @classmethod
    def load(cls, path) -> "EncoderParams":
        with np.load(Path(path), allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            return cls(EncoderConfig.from_dict(header["config"]), header["d_in"], data["vector"].copy())


def init_params(config: EncoderConfig, d_in: int, seed: int) -> EncoderParams:
    """Glorot-uniform weights, zero biases."""
    config.validate()
    rng = np.random.default_rng(seed)
    params = EncoderParams(config, d_in)
    for w in params.weights:
        a = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        w[...] = rng.uniform(-a, a, size=w.shape)
    return params


class GraphBatch:
    """Disjoint union of graphs laid out for batched message passing."""

    def __init__(self, graphs: Sequence[Graph], epsilon: float = 0.0, readout: str = "sum"):
        if not graphs:
            raise ValueError("empty batch")
        sizes = np.array([g.node_count for g in graphs], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        n = int(offsets[-1])
        self.sizes = sizes
        self.features = np.concatenate([g.features for g in graphs]) if n else np.zeros((0, graphs[0].d_feat))
        edges = np.concatenate([g.edges + off for g, off in zip(graphs, offsets[:-1])])
        rows = np.concatenate([edges[:, 0], edges[:, 1], np.arange(n)])
        cols = np.concatenate([edges[:, 1], edges[:, 0], np.arange(n)])
        vals = np.concatenate([np.ones(2 * len(edges)), np.full(n, 1.0 + epsilon)])
        owner = np.repeat(np.arange(len(graphs)), sizes)
        pool_vals = np.ones(n) if readout == "sum" else 1.0 / np.repeat(np.maximum(sizes, 1), sizes)
        prop = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        pool = sp.csr_matrix((pool_vals, (owner, np.arange(n))), shape=(len(graphs), n))
        if n <= _DENSE_LIMIT:
            prop, pool = prop.toarray(), pool.toarray()
        # (1 + eps) I + A is symmetric, so it is also its own transpose in backprop
        self.propagator = prop
        self.pool = pool
        self.pool_t = pool.T if n <= _DENSE_LIMIT else pool.T.tocsr()

    def __len__(self) -> int:
        return len(self.sizes)


def _batch(graphs, params: EncoderParams):
    if isinstance(graphs, GraphBatch):
        return graphs
    return GraphBatch(graphs, params.config.epsilon, params.config.readout)


def _forward(batch: GraphBatch, params: EncoderParams, tape: Optional[list] = None):
    if batch.features.shape[1] != params.d_in:
        raise ValueError(f"graph feature dim {batch.features.shape[1]} != encoder input dim {params.d_in}")
    return _run(batch, params.config, params.weights, params.biases, tape)


def _run(batch: GraphBatch, cfg: EncoderConfig, weights, biases, tape: Optional[list] = None):
    """Forward pass; weights may carry a leading probe axis (see ``_probe_losses``)."""
    relu = cfg.activation == "relu"
    h = batch.features
    unit = 0
    for _ in range(cfg.layers):
        h = batch.propagator @ h
        if tape is not None:
            tape.append(("propagate", None))
        for _ in range(cfg.mlp_layers):
            x = h
            u = x @ weights[unit] + biases[unit]
            h = np.maximum(u, 0.0) if relu else u
            if tape is not None:
                tape.append(("unit", (unit, x, u, relu)))
            unit += 1
    graph_vec = batch.pool @ h
    if tape is not None:
        tape.append(("pool", None))
    z = graph_vec
    for j in range(cfg.projection_layers):
        x = z
        u = x @ weights[unit] + biases[unit]
        last = j == cfg.projection_layers - 1
        z = u if (last or not relu) else np.maximum(u, 0.0)
        if tape is not None:
            tape.append(("unit", (unit, x, u, relu and not last)))
        unit += 1
    return graph_vec, z


def _backward(batch: GraphBatch, params: EncoderParams, tape: list, dz: np.ndarray, dgraph=None) -> np.ndarray:
    grad = np.zeros_like(params.vector)
    gw, gb = params._views(grad)
    delta = dz
    for op, data in reversed(tape):
        if op == "unit":
            unit, x, u, relu = data
            if relu:
                delta = delta * (u > 0)
            gw[unit][...] = x.T @ delta
            gb[unit][...] = delta.sum(0)
            delta = delta @ params.weights[unit].T
        elif op == "pool":
            if dgraph is not None:
                delta = delta + dgraph
            delta = batch.pool_t @ delta
        else:
            delta = batch.propagator @ delta
    return grad


def encode_batch(graphs, params: EncoderParams, output: str = "projection") -> np.ndarray:
    """Embed many graphs at once.

    ``output="projection"`` returns the projection-head output used by the
    selector and the loss; ``"graph"`` returns the pooled vector before the
    head, which is what the downstream probe consumes.
    """
    graph_vec, z = _forward(_batch(graphs, params), params)
    if output == "graph":
        return graph_vec
    if output == "projection":
        return z
    raise ValueError(f"unknown output {output!r}")


def encode(g: Graph, params: EncoderParams, output: str = "projection") -> np.ndarray:
    return encode_batch([g], params, output)[0]


LossTail = Callable[[np.ndarray], tuple[float, np.ndarray]]


class InfoNCETail:
    """Loss tail pairing embedding ``i`` with embedding ``half + i``.

    ``batched`` evaluates the loss alone over a leading probe axis, which the
    finite-difference checker uses to avoid one Python call per probe.
    """

    def __init__(self, half: int, config=None):
        from .objective import LossConfig

        self.half = half
        self.owner = np.arange(half)
        self.config = config or LossConfig()

    def __call__(self, z):
        from .objective import info_nce_pairs

        h = self.half
        return info_nce_pairs(z[:h], z[h : 2 * h], self.owner, self.config, grad=True)

    def batched(self, z):
        from .objective import info_nce_values

        h = self.half
        return info_nce_values(z[..., :h, :], z[..., h : 2 * h, :], self.owner, self.config)


def forward_backward(graphs, params: EncoderParams, loss_tail: LossTail) -> tuple[float, np.ndarray]:
    """Loss and its gradient with respect to the flat parameter vector.

    ``loss_tail`` maps the ``(B, embed_dim)`` projection outputs to
    ``(loss, d loss / d embeddings)``.
    """
    batch = _batch(graphs, params)
    tape: list = []
    _, z = _forward(batch, params, tape)
    loss, dz = loss_tail(z)
    loss = float(loss)
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss {loss}")
    grad = _backward(batch, params, tape, np.asarray(dz, dtype=np.float64))
    return loss, grad


def _relu_signs(tape: list, leading: int) -> np.ndarray:
    parts = [(data[2] > 0).reshape(leading, -1) for op, data in tape if op == "unit" and data[3]]
    return np.concatenate(parts, axis=1) if parts else np.zeros((leading, 0), bool)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``, defined as 0 when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def _probe_losses(batch: GraphBatch, params: EncoderParams, vectors: np.ndarray, loss_tail: LossTail):
    """Loss and ReLU sign pattern for each row of ``vectors``, in one stacked pass."""
    p = len(vectors)
    weights, biases, pos = [], [], 0
    for fan_in, fan_out in params.shapes:
        weights.append(vectors[:, pos : pos + fan_in * fan_out].reshape(p, fan_in, fan_out))
        pos += fan_in * fan_out
        biases.append(vectors[:, None, pos : pos + fan_out])
        pos += fan_out
    tape: list = []
    _, z = _run(batch, params.config, weights, biases, tape)
    batched = getattr(loss_tail, "batched", None)
    if batched is not None:
        losses = np.asarray(batched(z), dtype=np.float64)
    else:
        losses = np.array([loss_tail(z[i])[0] for i in range(p)])
    return losses, _relu_signs(tape, p)


def finite_difference_gradient(graphs, params: EncoderParams, loss_tail: LossTail, h: float = 1e-4, chunk: int = 256):
    """Central differences over every coordinate.

    Returns ``(gradient, valid)``; ``valid`` is False where the ``+-h`` probes
    flip the sign of some ReLU pre-activation, since the difference quotient
    then straddles a kink rather than estimating a derivative.
    """
    batch = _batch(graphs, params)
    if sp.issparse(batch.propagator):
        raise ValueError("finite differences are meant for small dense batches")
    base = params.vector
    _, reference = _probe_losses(batch, params, base[None, :], loss_tail)
    grad = np.zeros_like(base)
    valid = np.ones(base.size, dtype=bool)
    for start in range(0, base.size, chunk):
        idx = np.arange(start, min(start + chunk, base.size))
        probes = np.repeat(base[None, :], 2 * len(idx), axis=0)
        probes[np.arange(len(idx)), idx] += h
        probes[len(idx) + np.arange(len(idx)), idx] -= h
        losses, signs = _probe_losses(batch, params, probes, loss_tail)
        grad[idx] = (losses[: len(idx)] - losses[len(idx) :]) / (2.0 * h)
        flipped = np.any(signs != reference, axis=1)
        valid[idx] = ~(flipped[: len(idx)] | flipped[len(idx) :])
    return grad, valid


def random_tiny_graph(rng: np.random.Generator, d_feat: int, max_nodes: int = 8) -> Graph:
    n = int(rng.integers(1, max_nodes + 1))
    iu = np.triu_indices(n, 1)
    mask = rng.random(len(iu[0])) < 0.4
    edges = np.stack([iu[0][mask], iu[1][mask]], axis=1)
    return Graph(n, edges, rng.standard_normal((n, d_feat)))


def gradient_check(
    config: EncoderConfig,
    trials: int,
    seed: int,
    loss_tail: Optional[LossTail] = None,
    d_feat: int = 4,
    batch_size: int = 4,
    h: float = 1e-4,
) -> float:
    """Worst relative error between backprop and central differences.

    Each trial draws ``batch_size`` random graphs with at most 8 nodes and a
    random parameter point (Glorot init plus Gaussian jitter so biases are
    non-zero). The default loss tail is InfoNCE with the first half of the
    batch as anchors and the second half as their positives.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if loss_tail is None:
        loss_tail = InfoNCETail(batch_size // 2)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(trials):
        params = init_params(config, d_feat, int(rng.integers(2**31)))
        params.vector += 0.1 * rng.standard_normal(params.vector.size)
        graphs = [random_tiny_graph(rng, d_feat) for _ in range(batch_size)]
        batch = GraphBatch(graphs, config.epsilon, config.readout)
        _, analytic = forward_backward(batch, params, loss_tail)
        numeric, valid = finite_difference_gradient(batch, params, loss_tail, h)
        worst = max(worst, relative_error(analytic[valid], numeric[valid]))
    return worst
