"""Active-party defenses and the auxiliary-label evaluation of the mapping table.

Gradient defenses (Laplace noise, top-k compression) rewrite only the
gradient messages that leave the active party; the active party's own updates
use the clean gradient. The label-mapping defense trains the federation on
pseudo-labels ``mapping[y]`` and inverts the mapping at prediction time.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .numerics import RngStream

DEFENSE_KINDS = ("none", "laplace", "compression", "label_map")


@dataclass(frozen=True)
class DefenseConfig:
    kind: str = "none"
    laplace_scale: float = 0.0
    keep_ratio: float = 1.0
    mapping: tuple | None = None
    sigma: float = 0.0
    mapping_seed: int = 0

    def __post_init__(self):
        problems = []
        if self.kind not in DEFENSE_KINDS:
            problems.append(f"defense.kind must be one of {DEFENSE_KINDS}, got {self.kind!r}")
        if self.laplace_scale < 0:
            problems.append("defense.laplace_scale must be >= 0")
        if not 0.0 < self.keep_ratio <= 1.0:
            problems.append("defense.keep_ratio must be in (0, 1]")
        if not 0.0 <= self.sigma <= 1.0:
            problems.append("defense.sigma must be in [0, 1]")
        if self.mapping is not None:
            _check_permutation(self.mapping)
        if problems:
            raise ConfigError(problems)

    def outbound(self, grad: np.ndarray, rng: RngStream) -> np.ndarray:
        """Transform a gradient message on its way to a passive party."""
        if self.kind == "laplace":
            return laplace_noise(grad, self.laplace_scale, rng)
        if self.kind == "compression":
            return compress_gradient(grad, self.keep_ratio)
        return grad

    def resolved_mapping(self, n_classes: int) -> np.ndarray | None:
        if self.kind != "label_map":
            return None
        if self.mapping is not None:
            if len(self.mapping) != n_classes:
                raise ConfigError(f"mapping has {len(self.mapping)} entries for {n_classes} classes")
            return np.asarray(self.mapping, dtype=np.int64)
        return random_derangement(n_classes, RngStream(self.mapping_seed, (7,)))


def _check_permutation(mapping) -> np.ndarray:
    m = np.asarray(mapping, dtype=np.int64)
    if m.ndim != 1 or sorted(m.tolist()) != list(range(m.size)):
        raise ConfigError(f"label mapping {list(mapping)} is not a permutation")
    return m


def laplace_noise(grad, b: float, rng: RngStream) -> np.ndarray:
    grad = np.asarray(grad, dtype=np.float64)
    if b < 0:
        raise ValueError("Laplace scale must be non-negative")
    if b == 0:
        return grad.copy()
    return grad + rng.generator().laplace(0.0, b, grad.shape)


def compress_gradient(grad, keep_ratio: float) -> np.ndarray:
    """Keep the ceil(keep_ratio * size) largest-magnitude entries, zero the rest.

    Selection is global over the tensor; equal magnitudes favour the lower
    flat index.
    """
    if not 0.0 < keep_ratio <= 1.0:
        raise ValueError("keep_ratio must be in (0, 1]")
    grad = np.asarray(grad, dtype=np.float64)
    flat = grad.ravel()
    k = int(math.ceil(keep_ratio * flat.size - 1e-12))
    if k >= flat.size:
        return grad.copy()
    # stable sort on -|g| keeps index order among ties
    keep = np.argsort(-np.abs(flat), kind="stable")[:k]
    out = np.zeros_like(flat)
    out[keep] = flat[keep]
    return out.reshape(grad.shape)


def random_derangement(n: int, rng: RngStream) -> np.ndarray:
    """Uniformly random permutation of range(n) with no fixed points."""
    if n < 2:
        raise ValueError("a derangement needs n >= 2")
    g = rng.generator()
    while True:
        p = g.permutation(n)
        if not np.any(p == np.arange(n)):
            return p


def apply_label_mapping(labels, mapping) -> np.ndarray:
    m = _check_permutation(mapping)
    return m[np.asarray(labels, dtype=np.int64)]


def invert_mapping(mapping) -> np.ndarray:
    m = _check_permutation(mapping)
    inv = np.empty_like(m)
    inv[m] = np.arange(m.size)
    return inv


# -------------------------------------------- mapping-table evaluation

@dataclass(frozen=True)
class Resolution:
    """Which true label each cluster was pinned to, and how."""

    cluster_to_label: dict
    method: dict
    unresolved: tuple
    free_labels: tuple


def resolve_clusters(assignment, cluster_sizes, n_classes: int, train_labels, sigma: float,
                     rng: RngStream, aux_per_class: int = 5, skew_threshold: float = 3.0,
                     prior_ranking=None) -> Resolution:
    """Pin clusters to true labels from what a mapping-defense adversary can learn.

    ``floor(sigma * n)`` distinct classes are revealed through
    ``aux_per_class`` labelled training samples each; each revealed class
    claims the cluster holding most of its samples. A single unknown cluster
    is then settled by elimination. If cluster sizes are strongly skewed
    (largest/smallest > ``skew_threshold``) and a frequency ranking of the
    labels is known, the remaining clusters are matched by size.
    """
    assignment = np.asarray(assignment)
    train_labels = np.asarray(train_labels)
    k = n_classes
    g = rng.generator()
    n_known = int(math.floor(sigma * n_classes + 1e-9))
    present = np.unique(train_labels)
    if n_known > present.size:
        raise ValueError(f"sigma={sigma} asks for {n_known} classes, aux pool has {present.size}")
    known_classes = g.choice(present, size=n_known, replace=False) if n_known else []
    votes = np.zeros((k, k), dtype=np.int64)
    for c in known_classes:
        pool = np.flatnonzero(train_labels == c)
        draw = g.choice(pool, size=min(aux_per_class, pool.size), replace=False)
        for s in draw:
            votes[assignment[s], c] += 1

    mapping, method = {}, {}
    free_clusters = set(range(k))
    free_labels = set(range(k))
    while True:
        best = None
        for cl in sorted(free_clusters):
            for lab in sorted(free_labels):
                if votes[cl, lab] > 0 and (best is None or votes[cl, lab] > votes[best]):
                    best = (cl, lab)
        if best is None:
            break
        mapping[best[0]] = best[1]
        method[best[0]] = "auxiliary"
        free_clusters.discard(best[0])
        free_labels.discard(best[1])

    if len(free_clusters) == 1:
        cl, lab = free_clusters.pop(), free_labels.pop()
        mapping[cl], method[cl] = lab, "elimination"

    sizes = np.asarray(cluster_sizes, dtype=np.float64)
    skewed = sizes.min() > 0 and sizes.max() / sizes.min() > skew_threshold
    if len(free_clusters) >= 2 and skewed and prior_ranking is not None:
        by_size = sorted(free_clusters, key=lambda c: (-sizes[c], c))
        by_prior = [lab for lab in prior_ranking if lab in free_labels]
        for cl, lab in zip(by_size, by_prior):
            mapping[cl], method[cl] = lab, "size"
        free_clusters.clear()
        free_labels.clear()
    return Resolution(mapping, method, tuple(sorted(free_clusters)), tuple(sorted(free_labels)))


def expected_accuracy(pred_clusters, true_labels, resolution: Resolution, rng: RngStream,
                      exact_limit: int = 7, draws: int = 2000) -> tuple[float, float]:
    """Accuracy when unresolved clusters get a uniformly random bijection.

    Returns (expected accuracy over the random bijection, accuracy of one
    sampled bijection). The expectation is exact for up to ``exact_limit``
    unresolved clusters, Monte Carlo beyond that.
    """
    pred_clusters = np.asarray(pred_clusters)
    true_labels = np.asarray(true_labels)
    base = np.full(len(resolution.cluster_to_label) + len(resolution.unresolved), -1)
    for cl, lab in resolution.cluster_to_label.items():
        base[cl] = lab

    def acc_for(assign):
        table = base.copy()
        for cl, lab in zip(resolution.unresolved, assign):
            table[cl] = lab
        return float(np.mean(table[pred_clusters] == true_labels))

    g = rng.generator()
    free = list(resolution.free_labels)
    sampled = acc_for(list(g.permutation(free)) if free else [])
    if not resolution.unresolved:
        return sampled, sampled
    if len(free) <= exact_limit:
        vals = [acc_for(p) for p in itertools.permutations(free)]
    else:
        vals = [acc_for(list(g.permutation(free))) for _ in range(draws)]
    return float(np.mean(vals)), sampled


def evaluate_mapped_attack(report, attack_model, clusters, train_labels, x_val, y_val,
                           sigma: float, rng: RngStream, aux_per_class: int = 5,
                           skew_threshold: float = 3.0, prior_ranking="from_labels"):
    """Score an attack run against a label-mapped federation.

    The adversary treats the attack model's outputs as anonymous groups (one
    per cluster), pins them to true labels with :func:`resolve_clusters` and
    is scored on the validation split against the true labels. ``report`` is
    the :class:`~lea_vfl.attack.AttackReport` of the plain attack; the
    returned copy carries the post-resolution ASR (expectation over the random
    part) and the resolution details.
    """
    from .attack import predict

    n = clusters.k
    if prior_ranking == "from_labels":
        counts = np.bincount(np.asarray(train_labels), minlength=n)
        prior_ranking = [int(c) for c in np.argsort(-counts, kind="stable")]
    res = resolve_clusters(clusters.assignment, clusters.sizes(), n, train_labels, sigma,
                           rng.child(0), aux_per_class, skew_threshold, prior_ranking)
    # attack outputs are labels under the believed cluster->label table; undo it
    group_to_cluster = np.empty(n, dtype=np.int64)
    group_to_cluster[np.asarray(attack_model.cluster_labels)] = np.arange(n)
    pred_clusters = group_to_cluster[predict(attack_model, x_val)]
    asr, sampled = expected_accuracy(pred_clusters, y_val, res, rng.child(1))
    details = dict(report.details)
    details.update({
        "sigma": sigma,
        "asr_before_resolution": report.asr,
        "asr_sampled_assignment": sampled,
        "resolution": {str(k): [int(v), res.method[k]] for k, v in sorted(res.cluster_to_label.items())},
        "unresolved_clusters": list(res.unresolved),
    })
    return replace(report, asr=asr, details=details)
