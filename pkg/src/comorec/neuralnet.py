"""Small numpy neural core: embedding tables, dense layers, BCE, backprop and Adam.

Everything runs in float64. The only graph shape supported is the one the
recommenders need: several embedding lookups, concatenated, fed through a
stack of dense layers ending in a single sigmoid unit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

BCE_EPS = 1e-12
ACTIVATIONS = ("relu", "sigmoid", "identity")

log = logging.getLogger(__name__)


def sigmoid(z):
    """Logistic function, evaluated without overflow for large ``|z|``."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def relu(z):
    return np.maximum(z, 0.0)


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return relu(z)
    if name == "sigmoid":
        return sigmoid(z)
    return z


def bce_loss(p, y):
    """Binary cross-entropy with ``p`` clamped to ``[1e-12, 1 - 1e-12]``."""
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(y, dtype=np.float64)
    out = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return out if out.ndim else float(out)


@dataclass
class EmbeddingTable:
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[1] < 1:
            raise ValueError(f"embedding matrix must be 2-D with dim >= 1, got shape {self.matrix.shape}")

    @classmethod
    def uniform(cls, rows: int, dim: int, rng: np.random.Generator, scale: float = 0.05) -> "EmbeddingTable":
        return cls(rng.uniform(-scale, scale, size=(rows, dim)))

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def lookup(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.rows):
            raise IndexError(f"embedding index out of range [0, {self.rows})")
        return self.matrix[idx]


def embed(table: EmbeddingTable, idx: int) -> np.ndarray:
    return table.lookup(int(idx)).copy()


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.bias.shape[0]:
            raise ValueError(f"inconsistent layer shapes {self.weights.shape} / {self.bias.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def glorot(cls, n_in: int, n_out: int, activation: str, rng: np.random.Generator) -> "DenseLayer":
        limit = np.sqrt(6.0 / (n_in + n_out))
        return cls(rng.uniform(-limit, limit, size=(n_out, n_in)), np.zeros(n_out), activation)

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def pre_activation(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.n_in:
            raise ValueError(f"layer expects {self.n_in} inputs, got {x.shape[-1]}")
        return x @ self.weights.T + self.bias


def dense_forward(layer: DenseLayer, x) -> np.ndarray:
    """``activation(W x + b)`` for a vector or a (batch, in) matrix."""
    x = np.asarray(x, dtype=np.float64)
    return _activate(layer.activation, layer.pre_activation(x))


@dataclass
class ForwardCache:
    index: np.ndarray
    inputs: list  # input to each dense layer
    pre: list  # pre-activation of each dense layer
    prob: np.ndarray


class EmbeddingNetwork:
    """Concatenate one embedding per index column, then run a dense stack.

    The last layer must have one output unit with sigmoid activation; its
    gradient is taken jointly with the BCE loss, ``dL/dz = p - y``.
    """

    def __init__(self, tables: Sequence[EmbeddingTable], layers: Sequence[DenseLayer]):
        self.tables = list(tables)
        self.layers = list(layers)
        width = sum(t.dim for t in self.tables)
        if not self.layers or self.layers[0].n_in != width:
            raise ValueError(f"first dense layer must take {width} inputs")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError("dense layer shapes do not chain")
        last = self.layers[-1]
        if last.n_out != 1 or last.activation != "sigmoid":
            raise ValueError("output layer must be a single sigmoid unit")

    @classmethod
    def build(
        cls,
        vocab_sizes: Sequence[int],
        embedding_dim: int = 8,
        hidden_sizes: Sequence[int] = (64, 32),
        seed: int = 0,
        init_scale: float = 0.05,
    ) -> "EmbeddingNetwork":
        rng = np.random.default_rng(seed)
        tables = [EmbeddingTable.uniform(n, embedding_dim, rng, init_scale) for n in vocab_sizes]
        widths = [embedding_dim * len(vocab_sizes), *hidden_sizes]
        layers = [DenseLayer.glorot(a, b, "relu", rng) for a, b in zip(widths, widths[1:])]
        layers.append(DenseLayer.glorot(widths[-1], 1, "sigmoid", rng))
        return cls(tables, layers)

    def parameters(self) -> dict[str, np.ndarray]:
        """Live parameter arrays by name; optimizers update them in place."""
        params = {f"embedding{i}": t.matrix for i, t in enumerate(self.tables)}
        for i, layer in enumerate(self.layers):
            params[f"dense{i}.weights"] = layer.weights
            params[f"dense{i}.bias"] = layer.bias
        return params

    def _check_index(self, index) -> np.ndarray:
        index = np.asarray(index, dtype=np.int64)
        if index.ndim == 1:
            index = index.reshape(1, -1)
        if index.ndim != 2 or index.shape[1] != len(self.tables):
            raise ValueError(f"expected index rows with {len(self.tables)} columns, got shape {index.shape}")
        return index

    def forward(self, index) -> ForwardCache:
        index = self._check_index(index)
        x = np.concatenate([t.lookup(index[:, j]) for j, t in enumerate(self.tables)], axis=1)
        inputs, pre = [], []
        for layer in self.layers:
            inputs.append(x)
            z = layer.pre_activation(x)
            pre.append(z)
            x = _activate(layer.activation, z)
        return ForwardCache(index, inputs, pre, x[:, 0])

    def predict(self, index) -> np.ndarray:
        return self.forward(index).prob

    def loss(self, index, y) -> float:
        return float(np.mean(bce_loss(self.predict(index), y)))

    def loss_and_grads(self, index, y) -> tuple[float, dict[str, np.ndarray]]:
        cache = self.forward(index)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        loss = float(np.mean(bce_loss(cache.prob, y)))
        return loss, backward(self, cache, y)


def backward(net: EmbeddingNetwork, cache: ForwardCache, y) -> dict[str, np.ndarray]:
    """Gradients of mean batch BCE for every parameter of ``net``.

    Embedding gradients are dense arrays that are zero outside the rows
    looked up by the batch.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = len(y)
    grads: dict[str, np.ndarray] = {}
    delta = ((cache.prob - y) / n)[:, None]  # dL/dz at the sigmoid output
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if i < len(net.layers) - 1:
            act = layer.activation
            if act == "relu":
                delta = delta * (cache.pre[i] > 0)
            elif act == "sigmoid":
                s = sigmoid(cache.pre[i])
                delta = delta * s * (1.0 - s)
        grads[f"dense{i}.weights"] = delta.T @ cache.inputs[i]
        grads[f"dense{i}.bias"] = delta.sum(axis=0)
        delta = delta @ layer.weights
    offset = 0
    for j, table in enumerate(net.tables):
        g = np.zeros_like(table.matrix)
        np.add.at(g, cache.index[:, j], delta[:, offset : offset + table.dim])
        grads[f"embedding{j}"] = g
        offset += table.dim
    return grads


@dataclass
class Adam:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Bias-corrected Adam update, applied to ``params`` in place."""
        for name, g in grads.items():
            if params[name].shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {params[name].shape}")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            p = params[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(state: Adam, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    state.step(params, grads)
    return params


def _sample_coordinates(net: EmbeddingNetwork, index: np.ndarray, n_coords: int, rng) -> list[tuple[str, tuple]]:
    # stratified over parameter arrays; embedding rows restricted to those the batch touches
    params = net.parameters()
    per = max(1, -(-n_coords // len(params)))
    coords = []
    for name, arr in params.items():
        if name.startswith("embedding"):
            rows = np.unique(index[:, int(name[len("embedding"):])])
            r = rng.choice(rows, size=per)
            c = rng.integers(0, arr.shape[1], size=per)
            coords += [(name, (int(a), int(b))) for a, b in zip(r, c)]
        else:
            flat = rng.integers(0, arr.size, size=per)
            coords += [(name, np.unravel_index(int(f), arr.shape)) for f in flat]
    return coords


def gradient_check(
    net: EmbeddingNetwork,
    index,
    y,
    h: float = 1e-5,
    n_coords: int = 60,
    seed: int = 0,
    grad_fn: Optional[Callable] = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``grad_fn(net, index, y) -> grads`` overrides the analytic gradients
    under test (defaults to :func:`backward` on a fresh forward pass).
    Coordinates whose +/-h perturbation flips a ReLU unit are skipped:
    the loss is not differentiable across the kink, so the finite
    difference there says nothing about the backward pass.
    """
    index = net._check_index(index)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if grad_fn is None:
        grads = net.loss_and_grads(index, y)[1]
    else:
        grads = grad_fn(net, index, y)
    params = net.parameters()
    rng = np.random.default_rng(seed)
    worst = 0.0
    skipped = 0
    for name, pos in _sample_coordinates(net, index, n_coords, rng):
        arr = params[name]
        orig = arr[pos]
        arr[pos] = orig + h
        up, up_pattern = _loss_and_pattern(net, index, y)
        arr[pos] = orig - h
        down, down_pattern = _loss_and_pattern(net, index, y)
        arr[pos] = orig
        if not all(np.array_equal(a, b) for a, b in zip(up_pattern, down_pattern)):
            skipped += 1
            continue
        # difference per record before summing: far less cancellation than subtracting two means
        numeric = math.fsum((up - down).tolist()) / (2.0 * h * len(y))
        analytic = float(grads[name][pos])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    if skipped:
        log.debug("gradient check skipped %d coordinates straddling a ReLU kink", skipped)
    return worst


def _loss_and_pattern(net: EmbeddingNetwork, index, y):
    cache = net.forward(index)
    pattern = [z > 0 for layer, z in zip(net.layers, cache.pre) if layer.activation == "relu"]
    return bce_loss(cache.prob, y), pattern
