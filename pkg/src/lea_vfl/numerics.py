"""Dense arithmetic helpers, seeded random streams and the cosine primitive.

Everything is float64. Matrices are plain ``numpy.ndarray`` objects; the
functions here add the shape and finiteness checks the rest of the package
relies on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ShapeError

# exp() overflows past ~709; clamp well inside that
_EXP_CLAMP = 500.0


@dataclass(frozen=True)
class RngStream:
    """Identity of a reproducible random stream.

    A stream is named by a root ``seed`` and a tuple ``stream`` path. The same
    (seed, stream) pair always yields the same draws, independent of which
    worker asks for it. ``child`` derives a sub-stream, which is how per-model
    and per-restart streams are keyed.
    """

    seed: int
    stream: tuple = ()

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.stream + tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=self.stream)
        return np.random.default_rng(ss)


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def as_vector(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size == 0:
        raise ShapeError("vector must be non-empty")
    return a


def cosine_similarity(a, b) -> float:
    a = as_vector(a)
    b = as_vector(b)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity of a zero-norm vector is undefined")
    c = float(np.dot(a, b) / (na * nb))
    return min(1.0, max(-1.0, c))


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(z) -> np.ndarray:
    z = np.clip(np.asarray(z, dtype=np.float64), -_EXP_CLAMP, _EXP_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


def softmax_rows(z) -> np.ndarray:
    z = as_matrix(z)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(z) -> np.ndarray:
    z = as_matrix(z)
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softplus(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return np.logaddexp(0.0, z)
