"""Label enumeration attack and its pairwise (Binary-LEA) variant.

The adversary clusters its own features into ``n`` groups, enumerates
cluster->label assignments, trains one simulated copy of its initial local
model per assignment for a single epoch, and keeps the assignment whose
epoch-0 parameter gradient is most cosine-similar to the epoch-0 gradient it
observed during benign federated training. Only that winner is trained
further.

Binary-LEA resolves two clusters per stage: ``N(N-1)`` ordered label pairs
are scored the same way, and the winner is retrained as a three-way head
(first label / second label / neither).
"""
from __future__ import annotations

import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .clustering import ClusterAssignment, best_matching
from .errors import GuardError, ShapeError
from .models import GradientRecord, ModelHandle, backward, clone_model, forward, init_model, sgd_step
from .numerics import RngStream, cosine_similarity
from .objective import accuracy, cross_entropy, output_dim, predict_labels, probabilities
from .vfl import FederationResult, batch_schedule

MAX_ENUMERATED_CLASSES = 8
NEITHER = 2


@dataclass(frozen=True)
class SimulatedModelScore:
    sequence: tuple
    score: float
    model_id: int

    def __post_init__(self):
        if not -1.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [-1, 1]")


@dataclass
class AttackReport:
    scenario: str
    naa: float | None
    ca: float | None
    asr: float
    chosen_sequences: list
    scores: list
    seconds: float
    n_simulated: int
    dataset: str = ""
    partition: str = ""
    model_kind: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["chosen_sequences"] = [list(map(int, s)) for s in self.chosen_sequences]
        d["scores"] = [{"sequence": list(map(int, s.sequence)), "score": s.score, "model_id": s.model_id}
                       for s in self.scores]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class AdversaryView:
    """Everything the adversary holds locally when it mounts the attack."""

    scenario: str
    n_classes: int
    features: np.ndarray
    initial_model: ModelHandle
    fingerprint: GradientRecord | None
    lr: float
    epochs: int
    batch_size: int = 0
    schedule_seed: int = 0

    @classmethod
    def from_federation(cls, result: FederationResult, epochs: int | None = None) -> "AdversaryView":
        cfg = result.config
        adv = cfg.adversary_index
        if adv is None:
            raise ValueError("the federation has no adversary party")
        return cls(cfg.scenario, cfg.n_classes, cfg.parties[adv].features,
                   clone_model(result.initial_models[adv]), result.adversary_first_grad,
                   cfg.lr, cfg.epochs if epochs is None else epochs, cfg.batch_size, cfg.seed)


@dataclass
class AttackHead:
    bottom: ModelHandle
    top: ModelHandle | None
    labels: tuple  # label of each output class; for pair heads (l1, l2)

    def scores(self, x) -> np.ndarray:
        out = forward(self.bottom, x)[0]
        return out if self.top is None else forward(self.top, out)[0]


@dataclass
class AttackModel:
    kind: str  # "lea" | "binary_lea"
    heads: list
    n_classes: int
    cluster_labels: np.ndarray
    leftover: int | None = None


# ------------------------------------------------------------ enumeration

def enumerate_sequences(n: int) -> list:
    """All n! cluster->label sequences in lexicographic order."""
    if n < 1:
        raise ValueError("n must be positive")
    if n > MAX_ENUMERATED_CLASSES:
        raise GuardError(f"{n}! = {math.factorial(n)} simulated models is too many; "
                         f"use binary_lea_attack for n > {MAX_ENUMERATED_CLASSES}")
    return list(itertools.permutations(range(n)))


def binary_pair_sequences(remaining_labels) -> list:
    labels = sorted(int(v) for v in remaining_labels)
    if len(labels) < 2:
        raise ValueError("need at least two remaining labels")
    return list(itertools.permutations(labels, 2))


def count_binary_models(n: int) -> int:
    """n(n-1) + (n-2)(n-3) + ... over the stages Binary-LEA actually runs."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return sum(k * (k - 1) for k in range(n, 1, -2))


def closed_form_binary_count(n: int) -> float:
    """n(n+2)(2n-1)/12; agrees with :func:`count_binary_models` for even n only."""
    return n * (n + 2) * (2 * n - 1) / 12


def simulate_labels(clusters: ClusterAssignment, seq) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.int64)
    if seq.size != clusters.k:
        raise ValueError(f"sequence of length {seq.size} for {clusters.k} clusters")
    return seq[clusters.assignment]


def true_sequence(clusters: ClusterAssignment, labels) -> tuple:
    """The sequence matching clusters to their best-agreeing true labels."""
    return tuple(int(v) for v in best_matching(clusters.assignment, labels, clusters.k))


# ---------------------------------------------------------- local training

def local_train(bottom: ModelHandle, top: ModelHandle | None, x, targets, n_classes: int,
                lr: float, epochs: int, batch_size: int = 0, seed: int = 0, weights=None,
                start_epoch: int = 0) -> GradientRecord | None:
    """Train (bottom[, top]) in place; returns the epoch-0 bottom gradient if run."""
    m = x.shape[0]
    fingerprint = None
    for epoch in range(start_epoch, start_epoch + epochs):
        acc = None
        for idx in batch_schedule(m, batch_size, seed, epoch):
            out, cb = forward(bottom, x[idx])
            if top is not None:
                scores, ct = forward(top, out)
            else:
                scores = out
            w = None if weights is None else weights[idx]
            _, dz = cross_entropy(scores, targets[idx], n_classes, w)
            if top is not None:
                trec, dz = backward(top, ct, dz, epoch)
                sgd_step(top, trec, lr)
            rec, _ = backward(bottom, cb, dz, epoch)
            sgd_step(bottom, rec, lr)
            if epoch == 0:
                g = rec.flat * (len(idx) / m)
                acc = g if acc is None else acc + g
        if epoch == 0:
            fingerprint = GradientRecord(acc, 0, bottom.model_id)
    return fingerprint


def simulated_top(view: AdversaryView, rng: RngStream) -> ModelHandle | None:
    """The adversary's stand-in top layer: positive init, n_classes outputs."""
    if view.scenario != "split":
        return None
    dims = (view.initial_model.output_dim, output_dim(view.n_classes))
    top = init_model("lr", dims, rng, positive_only=True)
    if dims[1] == 1:
        # single output: the mean of the positive init range is the best
        # direction estimate for an unknown i.i.d. positive weight vector
        s = 1.0 / np.sqrt(dims[0])
        top.weights[0][...] = s / 2
        top.biases[0][...] = s / 2
    return top


def _require_fingerprint(view: AdversaryView) -> GradientRecord:
    if view.fingerprint is None:
        raise ValueError("no epoch-0 gradient: the benign trace is missing its first round")
    if view.fingerprint.flat.size != view.initial_model.n_params:
        raise ShapeError(f"fingerprint has {view.fingerprint.flat.size} entries, local model has "
                         f"{view.initial_model.n_params} parameters")
    return view.fingerprint


def _sweep(view, top_template, target_sets, workers):
    """Score one-epoch simulated models; keep only the best (lowest index on ties)."""
    benign = _require_fingerprint(view).flat

    def run(targets):
        bottom = clone_model(view.initial_model)
        top = clone_model(top_template) if top_template is not None else None
        fp = local_train(bottom, top, view.features, targets, view.n_classes, view.lr, 1,
                         view.batch_size, view.schedule_seed)
        if fp.flat.size != benign.size:
            raise ShapeError("simulated and benign fingerprints differ in length")
        return cosine_similarity(benign, fp.flat), bottom, top

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = pool.map(run, target_sets)
            return _reduce(results)
    return _reduce(run(t) for t in target_sets)


def _reduce(results):
    scores, best, best_i = [], None, -1
    for i, (score, bottom, top) in enumerate(results):
        scores.append(score)
        if best is None or score > best[0]:
            best, best_i = (score, bottom, top), i
    return scores, best_i, best[1], best[2]


# -------------------------------------------------------------------- LEA

def lea_select(view: AdversaryView, clusters: ClusterAssignment, top_rng: RngStream | None = None,
               workers: int = 1):
    """Pick the cluster->label sequence whose one-epoch gradient best matches.

    Returns (chosen sequence, list of :class:`SimulatedModelScore`, the chosen
    model's bottom and top after its first epoch).
    """
    n = view.n_classes
    if clusters.k != n:
        raise ValueError(f"{clusters.k} clusters for {n} classes")
    seqs = enumerate_sequences(n)
    top = simulated_top(view, top_rng or RngStream(0, (5,)))
    targets = [simulate_labels(clusters, s) for s in seqs]
    raw, best_i, bottom, top = _sweep(view, top, targets, workers)
    scores = [SimulatedModelScore(s, sc, i) for i, (s, sc) in enumerate(zip(seqs, raw))]
    return seqs[best_i], scores, bottom, top


def lea_attack(view: AdversaryView, clusters: ClusterAssignment, x_val, y_val, *,
               naa: float | None = None, ca: float | None = None,
               top_rng: RngStream | None = None, workers: int = 1) -> tuple[AttackReport, AttackModel]:
    """Full LEA: select, train the winner for ``view.epochs`` epochs, score on validation."""
    t0 = time.perf_counter()
    seq, scores, bottom, top = lea_select(view, clusters, top_rng, workers)
    y_sim = simulate_labels(clusters, seq)
    local_train(bottom, top, view.features, y_sim, view.n_classes, view.lr,
                max(view.epochs - 1, 0), view.batch_size, view.schedule_seed, start_epoch=1)
    model = AttackModel("lea", [AttackHead(bottom, top, tuple(range(view.n_classes)))],
                        view.n_classes, np.asarray(seq, dtype=np.int64))
    asr = accuracy(predict(model, x_val), y_val)
    report = AttackReport(view.scenario, naa, ca, asr, [seq], scores, time.perf_counter() - t0,
                          len(scores))
    return report, model


# ------------------------------------------------------------- Binary-LEA

def _pair_targets(clusters, resolved, c1, c2, l1, l2, remaining, n):
    t = np.zeros((clusters.k, n))
    for cl, lab in resolved.items():
        t[cl, lab] = 1.0
    t[c1, l1] = 1.0
    t[c2, l2] = 1.0
    others = [lab for lab in remaining if lab not in (l1, l2)]
    for cl in range(clusters.k):
        if cl not in resolved and cl not in (c1, c2) and others:
            t[cl, others] = 1.0 / len(others)
    return t[clusters.assignment]


def _pair_head(bottom, top, l1, l2, n):
    """Three-output head initialised from the chosen n-output model."""
    last = top if top is not None else bottom
    w, b = last.weights[-1], last.biases[-1]
    rest = [j for j in range(n) if j not in (l1, l2)]
    w3 = np.column_stack([w[:, l1], w[:, l2], w[:, rest].mean(axis=1)])
    b3 = np.array([b[l1], b[l2], b[rest].mean()])
    new_last = ModelHandle(last.kind, last.layer_dims[:-1] + (3,),
                           [x.copy() for x in last.weights[:-1]] + [w3],
                           [x.copy() for x in last.biases[:-1]] + [b3], last.output_activation)
    if top is not None:
        return bottom, new_last
    return new_last, None


def binary_lea_attack(view: AdversaryView, clusters: ClusterAssignment, x_val, y_val, *,
                      naa: float | None = None, ca: float | None = None,
                      top_rng: RngStream | None = None, workers: int = 1
                      ) -> tuple[AttackReport, AttackModel]:
    """Binary-LEA with floor(n/2) pair stages, clusters taken largest first."""
    n = view.n_classes
    if n < 3:
        raise ValueError("Binary-LEA needs at least three classes; use lea_attack")
    if clusters.k != n:
        raise ValueError(f"{clusters.k} clusters for {n} classes")
    _require_fingerprint(view)
    t0 = time.perf_counter()
    top_rng = top_rng or RngStream(0, (5,))
    sizes = clusters.sizes()
    order = sorted(range(n), key=lambda c: (-sizes[c], c))
    remaining = list(range(n))
    resolved = {}
    heads, all_scores, chosen = [], [], []
    for stage in range(n // 2):
        c1, c2 = order[2 * stage], order[2 * stage + 1]
        pairs = binary_pair_sequences(remaining)
        top = simulated_top(view, top_rng.child(stage))
        targets = [_pair_targets(clusters, resolved, c1, c2, l1, l2, remaining, n) for l1, l2 in pairs]
        raw, best_i, bottom, top = _sweep(view, top, targets, workers)
        base = len(all_scores)
        all_scores += [SimulatedModelScore(p, s, base + i) for i, (p, s) in enumerate(zip(pairs, raw))]
        l1, l2 = pairs[best_i]
        resolved[c1], resolved[c2] = l1, l2
        chosen.append((l1, l2))
        remaining = [lab for lab in remaining if lab not in (l1, l2)]

        hb, ht = _pair_head(bottom, top, l1, l2, n)
        y3 = np.full(clusters.assignment.size, NEITHER)
        y3[clusters.assignment == c1] = 0
        y3[clusters.assignment == c2] = 1
        w = np.ones(y3.size)
        n_neither = int(np.sum(y3 == NEITHER))
        if n_neither:
            w[y3 == NEITHER] = (sizes[c1] + sizes[c2]) / 2.0 / n_neither
        # the sweep already ran epoch 0, as in lea_attack
        local_train(hb, ht, view.features, y3, 3, view.lr, max(view.epochs - 1, 0),
                    view.batch_size, view.schedule_seed, weights=w, start_epoch=1)
        heads.append(AttackHead(hb, ht, (l1, l2)))

    leftover = None
    if remaining:
        leftover = remaining[0]
        resolved[order[-1]] = leftover
    cluster_labels = np.array([resolved[c] for c in range(n)], dtype=np.int64)
    model = AttackModel("binary_lea", heads, n, cluster_labels, leftover)
    asr = accuracy(predict(model, x_val), y_val)
    report = AttackReport(view.scenario, naa, ca, asr, chosen, all_scores,
                          time.perf_counter() - t0, len(all_scores))
    return report, model


def combine_pair_probabilities(head_probs, head_labels, leftover=None) -> np.ndarray:
    """Merge per-head (p1, p2, p_neither) rows into one label per sample.

    Among heads whose argmax is not "neither", the sample takes the label
    with the highest probability. When every head says "neither", the
    leftover label is used if there is one, otherwise the label with the
    highest non-neither probability overall.
    """
    probs = np.stack(head_probs)  # heads x samples x 3
    labels = np.asarray(head_labels)  # heads x 2
    n_heads, m, _ = probs.shape
    pair = probs[:, :, :2]
    best_side = np.argmax(pair, axis=2)
    best_p = np.take_along_axis(pair, best_side[..., None], axis=2)[..., 0]
    confident = np.argmax(probs, axis=2) != NEITHER
    masked = np.where(confident, best_p, -np.inf)
    head = np.argmax(masked, axis=0)
    fallback_head = np.argmax(best_p, axis=0)
    none_confident = ~confident.any(axis=0)
    head = np.where(none_confident, fallback_head, head)
    cols = np.arange(m)
    out = labels[head, best_side[head, cols]]
    if leftover is not None:
        out = np.where(none_confident, leftover, out)
    return out.astype(np.int64)


def predict(model: AttackModel, x) -> np.ndarray:
    if model.kind == "lea":
        return predict_labels(model.heads[0].scores(x), model.n_classes)
    probs = [probabilities(h.scores(x), 3) for h in model.heads]
    return combine_pair_probabilities(probs, [h.labels for h in model.heads], model.leftover)


# ---------------------------------------------------- similarity analysis

def compare_similarity_measures(view: AdversaryView, clusters: ClusterAssignment,
                                benign_params, top_rng: RngStream | None = None) -> list:
    """Per sequence: cosine of first-epoch gradients and of fully trained parameters.

    Every simulated model is trained for ``view.epochs`` epochs here, so this
    is an analysis tool, not part of the attack.
    """
    benign_fp = _require_fingerprint(view).flat
    top_t = simulated_top(view, top_rng or RngStream(0, (5,)))
    rows = []
    for seq in enumerate_sequences(view.n_classes):
        bottom = clone_model(view.initial_model)
        top = clone_model(top_t) if top_t is not None else None
        y_sim = simulate_labels(clusters, seq)
        fp = local_train(bottom, top, view.features, y_sim, view.n_classes, view.lr, view.epochs,
                         view.batch_size, view.schedule_seed)
        rows.append({"sequence": seq,
                     "gradient_cosine": cosine_similarity(benign_fp, fp.flat),
                     "parameter_cosine": cosine_similarity(benign_params, bottom.params())})
    return rows
