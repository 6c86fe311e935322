"""Link functions and cross-entropy shared by the federation and the attack.

Binary tasks use one score per sample and a sigmoid link; tasks with more
than two classes use one score per class and a row softmax.
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .numerics import as_matrix, log_softmax_rows, sigmoid, softmax_rows, softplus


def output_dim(n_classes: int) -> int:
    return 1 if n_classes == 2 else n_classes


def probabilities(scores, n_classes: int) -> np.ndarray:
    """Per-class probabilities, shape (m, n_classes)."""
    z = as_matrix(scores)
    if n_classes == 2:
        p = sigmoid(z[:, 0])
        return np.column_stack([1.0 - p, p])
    return softmax_rows(z)


def predict_labels(scores, n_classes: int) -> np.ndarray:
    z = as_matrix(scores)
    if n_classes == 2:
        return (z[:, 0] > 0).astype(np.int64)
    return np.argmax(z, axis=1)


def target_matrix(targets, n_classes: int) -> np.ndarray:
    """Integer labels or an (m, n) soft-target matrix, returned as (m, n)."""
    t = np.asarray(targets)
    if t.ndim == 1:
        out = np.zeros((t.size, n_classes))
        out[np.arange(t.size), t.astype(np.int64)] = 1.0
        return out
    return np.asarray(t, dtype=np.float64)


def cross_entropy(scores, targets, n_classes: int, weights=None) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the raw scores.

    With unit weights the gradient is ``(p - y) / m``. Sample weights turn
    the mean into a weighted mean.
    """
    z = as_matrix(scores)
    t = target_matrix(targets, n_classes)
    m = z.shape[0]
    if z.shape[1] != output_dim(n_classes) or t.shape != (m, n_classes):
        raise ShapeError(f"scores {z.shape} / targets {t.shape} do not fit {n_classes} classes")
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=np.float64)
    wsum = w.sum()
    if n_classes == 2:
        s = z[:, 0]
        y1 = t[:, 1]
        per = softplus(s) - y1 * s
        loss = float(np.dot(w, per) / wsum)
        grad = ((sigmoid(s) - y1) * w / wsum)[:, None]
        return loss, grad
    logp = log_softmax_rows(z)
    per = -(t * logp).sum(axis=1)
    loss = float(np.dot(w, per) / wsum)
    grad = (np.exp(logp) - t) * (w / wsum)[:, None]
    return loss, grad


def accuracy(pred, labels) -> float:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    return float(np.mean(pred == labels)) if labels.size else float("nan")
