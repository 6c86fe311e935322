"""Logistic-regression and sigmoid MLP models with hand-written backprop.

A model is a chain of dense layers ``x @ W + b``. Hidden layers apply a
sigmoid; the last layer emits raw scores unless ``output_activation`` is set,
which is how the bottom half of a split MLP (whose output is a hidden layer of
the full network) is represented.

Parameters flatten layer by layer in forward order, each layer contributing
its weight matrix (row-major, shape ``fan_in x fan_out``) followed by its
bias. Gradient fingerprints use the same order.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeError, StaleCacheError
from .numerics import RngStream, as_matrix, sigmoid

KINDS = ("lr", "mlp")
CHECKPOINT_FORMAT = "lea-vfl-model"
CHECKPOINT_VERSION = 1

_ids = itertools.count()


def _new_id(prefix: str = "m") -> str:
    return f"{prefix}{next(_ids)}"


@dataclass
class ModelHandle:
    kind: str
    layer_dims: tuple
    weights: list
    biases: list
    output_activation: bool = False
    model_id: str = field(default_factory=_new_id)
    version: int = 0

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "lr" and len(self.layer_dims) != 2:
            raise ShapeError("a logistic-regression model has exactly one linear layer")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("layer count does not match layer_dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[i], self.layer_dims[i + 1]) or b.shape != (self.layer_dims[i + 1],):
                raise ShapeError(f"layer {i} has shapes {w.shape}/{b.shape}, dims say "
                                 f"{self.layer_dims[i]}x{self.layer_dims[i + 1]}")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for wb in zip(self.weights, self.biases) for p in wb])


@dataclass(frozen=True)
class SplitModel:
    bottom: ModelHandle
    top: ModelHandle


@dataclass(frozen=True)
class GradientRecord:
    flat: np.ndarray
    epoch: int
    owner: str

    def __len__(self):
        return self.flat.size

    def scaled(self, factor: float) -> "GradientRecord":
        return GradientRecord(self.flat * factor, self.epoch, self.owner)


@dataclass(frozen=True)
class ForwardCache:
    model_id: str
    version: int
    activations: tuple  # input to each layer, then the final output


def init_model(kind: str, layer_dims, rng: RngStream, positive_only: bool = False,
               output_activation: bool = False, zero: bool = False) -> ModelHandle:
    """Uniform init in [-s, s] with s = 1/sqrt(fan_in); (0, s] if positive_only."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ShapeError(f"invalid layer dims {layer_dims!r}")
    g = rng.generator()
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        s = 1.0 / np.sqrt(fan_in)
        if zero:
            w, b = np.zeros((fan_in, fan_out)), np.zeros(fan_out)
        elif positive_only:
            # 1 - U[0,1) lies in (0, 1]
            w = s * (1.0 - g.random((fan_in, fan_out)))
            b = s * (1.0 - g.random(fan_out))
        else:
            w = g.uniform(-s, s, (fan_in, fan_out))
            b = g.uniform(-s, s, fan_out)
        weights.append(w)
        biases.append(b)
    return ModelHandle(kind, tuple(dims), weights, biases, output_activation)


def mlp_dims(n_in: int, hidden, n_out: int) -> tuple:
    return (int(n_in), *[int(h) for h in hidden], int(n_out))


def forward(model: ModelHandle, x) -> tuple[np.ndarray, ForwardCache]:
    a = as_matrix(x)
    if a.shape[1] != model.input_dim:
        raise ShapeError(f"model expects {model.input_dim} inputs, got {a.shape[1]}")
    acts = [a]
    last = model.n_layers - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        a = sigmoid(z) if (i < last or model.output_activation) else z
        acts.append(a)
    return a, ForwardCache(model.model_id, model.version, tuple(acts))


def backward(model: ModelHandle, cache: ForwardCache | None, upstream, epoch: int = 0
             ) -> tuple[GradientRecord, np.ndarray]:
    """Parameter gradient and input gradient given dLoss/dOutput."""
    if cache is None or cache.model_id != model.model_id or cache.version != model.version:
        raise StaleCacheError("backward() needs the cache of the latest forward() on this model")
    delta = as_matrix(upstream)
    out = cache.activations[-1]
    if delta.shape != out.shape:
        raise ShapeError(f"upstream gradient {delta.shape} does not match output {out.shape}")
    last = model.n_layers - 1
    grads_w = [None] * model.n_layers
    grads_b = [None] * model.n_layers
    for i in range(last, -1, -1):
        if i < last or model.output_activation:
            a = cache.activations[i + 1]
            delta = delta * a * (1.0 - a)
        grads_w[i] = cache.activations[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        delta = delta @ model.weights[i].T
    flat = np.concatenate([p.ravel() for wb in zip(grads_w, grads_b) for p in wb])
    return GradientRecord(flat, epoch, model.model_id), delta


def sgd_step(model: ModelHandle, grad: GradientRecord, lr: float) -> ModelHandle:
    """In-place ``theta <- theta - lr * grad``; returns the same handle."""
    if grad.owner != model.model_id:
        raise ValueError(f"gradient belongs to {grad.owner}, not {model.model_id}")
    if grad.flat.size != model.n_params:
        raise ShapeError(f"gradient has {grad.flat.size} entries, model has {model.n_params}")
    pos = 0
    for w, b in zip(model.weights, model.biases):
        w -= lr * grad.flat[pos:pos + w.size].reshape(w.shape)
        pos += w.size
        b -= lr * grad.flat[pos:pos + b.size]
        pos += b.size
    model.version += 1
    return model


def clone_model(model: ModelHandle) -> ModelHandle:
    return ModelHandle(model.kind, model.layer_dims, [w.copy() for w in model.weights],
                       [b.copy() for b in model.biases], model.output_activation)


def set_params(model: ModelHandle, flat) -> ModelHandle:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.size != model.n_params:
        raise ShapeError(f"{flat.size} values for {model.n_params} parameters")
    pos = 0
    for w, b in zip(model.weights, model.biases):
        w[...] = flat[pos:pos + w.size].reshape(w.shape)
        pos += w.size
        b[...] = flat[pos:pos + b.size]
        pos += b.size
    model.version += 1
    return model


# ------------------------------------------------------------ checkpoints

def model_to_dict(model: ModelHandle) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "layer_dims": list(model.layer_dims),
        "output_activation": model.output_activation,
        "layers": [{"weight": w.tolist(), "bias": b.tolist()}
                   for w, b in zip(model.weights, model.biases)],
    }


def model_from_dict(d: dict) -> ModelHandle:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a model checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')}")
    ws = [np.array(layer["weight"], dtype=np.float64).reshape(a, b)
          for layer, a, b in zip(d["layers"], d["layer_dims"][:-1], d["layer_dims"][1:])]
    bs = [np.array(layer["bias"], dtype=np.float64) for layer in d["layers"]]
    return ModelHandle(d["kind"], tuple(d["layer_dims"]), ws, bs, bool(d["output_activation"]))


def save_model(model: ModelHandle, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path) -> ModelHandle:
    return model_from_dict(json.loads(Path(path).read_text()))
