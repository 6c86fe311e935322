"""k-means (k-means++ seeding), PCA projection and cluster accuracy."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateInputError, ShapeError
from .numerics import RngStream, as_matrix

EXHAUSTIVE_MATCH_LIMIT = 6


@dataclass(frozen=True)
class ClusterAssignment:
    assignment: np.ndarray
    centroids: np.ndarray
    k: int
    inertia: float = float("nan")
    n_iter: int = 0
    history: tuple = ()  # inertia after each Lloyd iteration of the kept restart

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def relabeled(self, perm) -> "ClusterAssignment":
        """Rename cluster ``c`` to ``perm[c]``."""
        perm = np.asarray(perm)
        cents = np.empty_like(self.centroids)
        cents[perm] = self.centroids
        return ClusterAssignment(perm[self.assignment], cents, self.k, self.inertia, self.n_iter,
                                 self.history)


def _sq_dists(x, centroids):
    # ||x||^2 - 2 x.c + ||c||^2, clipped against round-off
    d = (x * x).sum(1)[:, None] - 2.0 * x @ centroids.T + (centroids * centroids).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(x, k, g):
    m = x.shape[0]
    centers = [int(g.integers(m))]
    closest = _sq_dists(x, x[centers])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # every point coincides with a chosen center; pick any unused row
            rest = np.setdiff1d(np.arange(m), centers)
            nxt = int(g.choice(rest))
        else:
            nxt = int(np.searchsorted(np.cumsum(closest), g.random() * total, side="right"))
            nxt = min(nxt, m - 1)
        centers.append(nxt)
        closest = np.minimum(closest, _sq_dists(x, x[[nxt]])[:, 0])
    return x[centers].copy()


def _repair_empty(x, assign, centroids, d2):
    k = centroids.shape[0]
    for c in range(k):
        if np.any(assign == c):
            continue
        sizes = np.bincount(assign, minlength=k)
        big = int(np.argmax(sizes))
        members = np.flatnonzero(assign == big)
        far = members[int(np.argmax(d2[members, big]))]
        assign[far] = c
        centroids[c] = x[far]
    return assign


def _lloyd(x, init, max_iter):
    centroids = init.copy()
    k = centroids.shape[0]
    assign = None
    it = 0
    history = []
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(x, centroids)
        new = np.argmin(d2, axis=1)  # ties -> lowest centroid index
        new = _repair_empty(x, new, centroids, d2)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for c in range(k):
            centroids[c] = x[assign == c].mean(axis=0)
        history.append(float(((x - centroids[assign]) ** 2).sum()))
    inertia = float(((x - centroids[assign]) ** 2).sum())
    return assign, centroids, inertia, it, tuple(history)


def kmeans(x, k: int, rng: RngStream, max_iter: int = 300, n_restarts: int = 10,
           workers: int = 1) -> ClusterAssignment:
    """Best-of-``n_restarts`` Lloyd's algorithm from k-means++ seeds.

    Restart ``r`` draws from ``rng.child(r)``, so the result does not depend
    on ``workers``. Ties on inertia go to the lower restart index.
    """
    x = as_matrix(x)
    if k < 1 or x.shape[0] < k:
        raise DegenerateInputError(f"cannot form {k} clusters from {x.shape[0]} points")

    def run(r):
        return _lloyd(x, _kmeanspp(x, k, rng.child(r).generator()), max_iter)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, range(n_restarts)))
    else:
        results = [run(r) for r in range(n_restarts)]
    best = min(range(n_restarts), key=lambda r: (results[r][2], r))
    assign, cents, inertia, it, history = results[best]
    return ClusterAssignment(assign.astype(np.int64), cents, k, inertia, it, history)


@dataclass(frozen=True)
class PCAProjection:
    scores: np.ndarray
    components: np.ndarray
    mean: np.ndarray
    explained_variance: np.ndarray
    variance_captured: float

    def transform(self, x) -> np.ndarray:
        return (as_matrix(x) - self.mean) @ self.components


def optional_pca(x, dims: int) -> PCAProjection:
    """Project onto the top ``dims`` principal axes (covariance eigendecomposition)."""
    x = as_matrix(x)
    if dims < 1 or dims > x.shape[1]:
        raise ShapeError(f"cannot keep {dims} components of {x.shape[1]} features")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / max(x.shape[0] - 1, 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.maximum(vals[order], 0.0)
    vecs = vecs[:, order[:dims]]
    # deterministic sign: largest-magnitude loading positive
    flip = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(dims)])
    vecs = vecs * np.where(flip == 0, 1.0, flip)
    total = vals.sum()
    captured = float(vals[:dims].sum() / total) if total > 0 else 1.0
    return PCAProjection(xc @ vecs, vecs, mean, vals[:dims], captured)


def confusion(assignment, labels, k: int) -> np.ndarray:
    c = np.zeros((k, k), dtype=np.int64)
    np.add.at(c, (np.asarray(assignment), np.asarray(labels)), 1)
    return c


def best_matching(assignment, labels, k: int) -> np.ndarray:
    """Cluster->label bijection maximizing agreement; entry c is cluster c's label."""
    conf = confusion(assignment, labels, k)
    if k <= EXHAUSTIVE_MATCH_LIMIT:
        best = max(itertools.permutations(range(k)),
                   key=lambda p: conf[np.arange(k), list(p)].sum())
        return np.asarray(best, dtype=np.int64)
    rows, cols = linear_sum_assignment(-conf)
    out = np.empty(k, dtype=np.int64)
    out[rows] = cols
    return out


def cluster_accuracy(assign: ClusterAssignment, true_labels, n_classes: int | None = None) -> float:
    labels = np.asarray(true_labels)
    n = assign.k if n_classes is None else n_classes
    if assign.k != n:
        raise ValueError(f"{assign.k} clusters for {n} classes")
    match = best_matching(assign.assignment, labels, assign.k)
    return float(np.mean(match[assign.assignment] == labels))
