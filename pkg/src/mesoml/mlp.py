"""Feed-forward multilayer perceptron trained by backpropagation.

Hidden layers use sigmoid, tanh or ReLU; the output layer is a 2-unit
softmax trained on cross-entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import Dataset
from .errors import DivergenceError, SchemaError

ACTIVATIONS = {"sigmoid": 0, "tanh": 1, "relu": 2}


@dataclass(frozen=True)
class MlpModel:
    sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str = "sigmoid"
    train_loss: float | None = None

    def __post_init__(self):
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.sizes[l + 1], self.sizes[l]) or b.shape != (self.sizes[l + 1],):
                raise ValueError(f"layer {l} parameter shapes do not chain")

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    @classmethod
    def from_flat(cls, sizes, flat, activation, train_loss=None) -> "MlpModel":
        Ws, bs, off = [], [], 0
        for nin, nout in zip(sizes[:-1], sizes[1:]):
            Ws.append(flat[off:off + nin * nout].reshape(nout, nin).copy())
            off += nin * nout
            bs.append(flat[off:off + nout].copy())
            off += nout
        return cls(tuple(sizes), tuple(Ws), tuple(bs), activation, train_loss)

    def predict_distribution(self, x) -> np.ndarray:
        return mlp_forward(self, x)[1]


def mlp_init(sizes, activation: str = "sigmoid", seed: int = 0) -> MlpModel:
    """Weights uniform in [-0.5, 0.5], biases zero.

    ``sizes`` lists every layer width, input first and the 2-unit output
    last, e.g. ``[m, h1, 2]``; ``[m, 2]`` is a plain softmax layer.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ValueError(f"layer sizes must be positive, got {sizes}")
    if sizes[-1] != 2:
        raise ValueError("output layer must have 2 units")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)
    Ws = tuple(rng.uniform(-0.5, 0.5, size=(o, i)) for i, o in zip(sizes[:-1], sizes[1:]))
    bs = tuple(np.zeros(o) for o in sizes[1:])
    return MlpModel(sizes, Ws, bs, activation)


def _activate(z, activation):
    if activation == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if activation == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activation_grad(a, activation):
    if activation == "sigmoid":
        return a * (1.0 - a)
    if activation == "tanh":
        return 1.0 - a * a
    return (a > 0.0).astype(np.float64)


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def mlp_forward(model: MlpModel, x):
    """Return ``(activations, probabilities)``.

    ``activations[0]`` is the input and ``activations[l]`` the output of
    hidden layer l; the last entry is the softmax output. Accepts a single
    instance or a row matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_inputs:
        raise SchemaError(f"expected {model.n_inputs} inputs, got {x.shape[-1]}")
    acts = [x]
    L = len(model.weights)
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ W.T + b
        acts.append(_softmax(z) if l == L - 1 else _activate(z, model.activation))
    return acts, acts[-1]


@dataclass(frozen=True)
class Gradients:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])


def mlp_backprop(model: MlpModel, x, y) -> Gradients:
    """Exact gradient of the summed cross-entropy over the given instance(s)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.intp))
    acts, prob = mlp_forward(model, x)
    delta = prob.copy()
    delta[np.arange(len(y)), y] -= 1.0
    gW, gb = [], []
    for l in range(len(model.weights) - 1, -1, -1):
        gW.append(delta.T @ acts[l])
        gb.append(delta.sum(axis=0))
        if l > 0:
            delta = (delta @ model.weights[l]) * _activation_grad(acts[l], model.activation)
    return Gradients(tuple(reversed(gW)), tuple(reversed(gb)))


def mlp_loss(model: MlpModel, X, y) -> float:
    """Mean cross-entropy over rows of X."""
    _, prob = mlp_forward(model, np.atleast_2d(X))
    y = np.asarray(y, dtype=np.intp)
    return float(-np.mean(np.log(np.maximum(prob[np.arange(len(y)), y], 1e-300))))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.3
    momentum: float = 0.2
    epochs: int = 500
    seed: int = 0
    hidden: tuple[int, ...] | None = None  # None -> one layer of ceil((p+2)/2)
    activation: str = "sigmoid"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def default_hidden(p: int) -> tuple[int, ...]:
    return (math.ceil((p + 2) / 2),)


def mlp_train(d: Dataset, cfg: TrainConfig = TrainConfig()) -> MlpModel:
    """Per-example SGD with momentum over a seeded shuffle each epoch."""
    if any(a.is_nominal for a in d.attributes):
        raise SchemaError("MLP needs an encoded (all-numeric) dataset")
    X = np.ascontiguousarray(d.X, dtype=np.float64)
    y = d.y.astype(np.intp)
    hidden = default_hidden(d.p) if cfg.hidden is None else tuple(cfg.hidden)
    model = mlp_init((d.p, *hidden, 2), cfg.activation, seed=cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    sizes = np.array(model.sizes, dtype=np.intp)
    params = model.flat()
    velocity = np.zeros_like(params)
    act = ACTIVATIONS[cfg.activation]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(d.n).astype(np.intp)
        loss = _kernels.mlp_epoch(params, velocity, sizes, act, X, y, order, cfg.learning_rate, cfg.momentum)
        if not (math.isfinite(loss) and np.isfinite(params).all()):
            raise DivergenceError(f"MLP diverged in epoch {epoch}")
    trained = MlpModel.from_flat(model.sizes, params, cfg.activation)
    return MlpModel(trained.sizes, trained.weights, trained.biases, cfg.activation, mlp_loss(trained, X, y))
