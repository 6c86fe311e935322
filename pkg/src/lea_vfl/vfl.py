"""In-process simulation of AggVFL and SplitVFL training.

Every party owns a local model over its feature slice. Each step, parties
send their outputs to the active party (:class:`ForwardMessage`). The active
party aggregates them (sum for AggVFL, concatenation into a trainable top
layer for SplitVFL), applies the link and cross-entropy, and answers each
passive party with a :class:`GradientMessage` holding dLoss/dOutput for that
party. Passive parties then backpropagate and step locally.

The adversary's first-round fingerprint is the gradient of its own local
(bottom) parameters over epoch 0, averaged over the epoch's steps and
computed from the gradient messages it actually received.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import PartyView
from .defense import DefenseConfig, invert_mapping
from .errors import ConfigError, ShapeError, TrainingDivergedError
from .models import (GradientRecord, ModelHandle, backward, clone_model, forward,
                     init_model, mlp_dims, sgd_step)
from .numerics import RngStream
from .objective import accuracy, cross_entropy, output_dim, predict_labels

log = logging.getLogger(__name__)

SCENARIOS = ("agg", "split")

# sub-stream keys under the federation seed
STREAM_INIT = 1
STREAM_TOP = 2
STREAM_BATCH = 3
STREAM_NOISE = 4


@dataclass(frozen=True)
class ForwardMessage:
    party_id: int
    epoch: int
    step: int
    output: np.ndarray


@dataclass(frozen=True)
class GradientMessage:
    party_id: int
    epoch: int
    step: int
    grad: np.ndarray


@dataclass
class FederationConfig:
    scenario: str
    parties: list
    n_classes: int
    model_kind: str = "lr"
    hidden: tuple = (128, 64)
    epochs: int = 200
    lr: float = 0.1
    batch_size: int = 0
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    seed: int = 0
    top_positive: bool = True
    fixed_unit_top: bool = False
    active_zero_init: bool = False
    split_embed_dim: int = 1

    def __post_init__(self):
        problems = []
        if self.scenario not in SCENARIOS:
            problems.append(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        roles = [p.role for p in self.parties]
        if roles.count("active") != 1:
            problems.append("exactly one active party is required")
        if len(self.parties) < 2:
            problems.append("at least one passive party is required")
        if len({p.features.shape[0] for p in self.parties}) > 1:
            problems.append("parties disagree on the number of samples")
        if self.model_kind not in ("lr", "mlp"):
            problems.append(f"model kind must be lr or mlp, got {self.model_kind!r}")
        if self.epochs < 0 or self.lr < 0 or self.batch_size < 0:
            problems.append("epochs, lr and batch_size must be non-negative")
        if problems:
            raise ConfigError(problems)

    @property
    def active_index(self) -> int:
        return [p.role for p in self.parties].index("active")

    @property
    def adversary_index(self) -> int | None:
        roles = [p.role for p in self.parties]
        return roles.index("adversary") if "adversary" in roles else None

    @property
    def labels(self) -> np.ndarray:
        return self.parties[self.active_index].labels


@dataclass
class RoundTrace:
    epoch: int
    loss: float
    grad_norms: dict
    returned_grads: dict | None = None
    adversary_grad: GradientRecord | None = None

    def to_json(self) -> str:
        return json.dumps({"epoch": self.epoch, "loss": self.loss,
                           "grad_norms": {str(k): v for k, v in self.grad_norms.items()}},
                          sort_keys=True)


@dataclass
class RoundOutcome:
    loss: float
    messages: list
    grads: dict


@dataclass
class FederationResult:
    config: FederationConfig
    models: list
    top: ModelHandle | None
    initial_models: list
    initial_top: ModelHandle | None
    traces: list
    mapping: np.ndarray | None
    naa: float | None = None

    @property
    def adversary_index(self) -> int:
        return self.config.adversary_index

    @property
    def adversary_first_grad(self) -> GradientRecord | None:
        return self.traces[0].adversary_grad if self.traces else None

    def predict(self, party_features) -> np.ndarray:
        return predict_global(self.config.scenario, self.models, self.top, party_features,
                              self.config.n_classes, self.mapping)

    def trace_jsonl(self) -> str:
        return "".join(t.to_json() + "\n" for t in self.traces)


def batch_schedule(m: int, batch_size: int, seed: int, epoch: int) -> list:
    """Sample order for one epoch; shared knowledge of every participant."""
    if batch_size <= 0 or batch_size >= m:
        return [np.arange(m)]
    order = RngStream(seed, (STREAM_BATCH, epoch)).generator().permutation(m)
    return [order[i:i + batch_size] for i in range(0, m, batch_size)]


def build_models(cfg: FederationConfig) -> tuple[list, ModelHandle | None]:
    root = RngStream(cfg.seed)
    out = output_dim(cfg.n_classes)
    models = []
    for i, p in enumerate(cfg.parties):
        f = p.n_features
        zero = cfg.active_zero_init and p.role == "active"
        rng = root.child(STREAM_INIT, i)
        if cfg.scenario == "agg":
            dims = (f, out) if cfg.model_kind == "lr" else mlp_dims(f, cfg.hidden, out)
            models.append(init_model(cfg.model_kind, dims, rng, zero=zero))
        elif cfg.model_kind == "lr":
            models.append(init_model("lr", (f, cfg.split_embed_dim), rng, zero=zero))
        else:
            models.append(init_model("mlp", mlp_dims(f, cfg.hidden[:-1], cfg.hidden[-1]), rng,
                                     zero=zero))
    if cfg.scenario == "agg":
        return models, None
    top_in = sum(m.output_dim for m in models)
    if cfg.fixed_unit_top:
        top = ModelHandle("lr", (top_in, out), [np.ones((top_in, out))], [np.zeros(out)])
    else:
        top = init_model("lr", (top_in, out), root.child(STREAM_TOP), positive_only=cfg.top_positive)
    return models, top


def _forward_all(models, xs, epoch, step):
    outs, caches, msgs = [], [], []
    for i, (mdl, x) in enumerate(zip(models, xs)):
        o, c = forward(mdl, x)
        outs.append(o)
        caches.append(c)
        msgs.append(ForwardMessage(i, epoch, step, o))
    return outs, caches, msgs


def _outbound(grad, i, active_index, defense, noise_rng):
    if i == active_index or defense is None:
        return grad
    return defense.outbound(grad, noise_rng.child(i))


def agg_round(models, xs, labels, n_classes: int, lr: float, active_index: int, *,
              defense: DefenseConfig | None = None, noise_rng: RngStream | None = None,
              epoch: int = 0, step: int = 0) -> RoundOutcome:
    """One AggVFL step over a batch; updates every party's model in place."""
    outs, caches, _ = _forward_all(models, xs, epoch, step)
    if len({o.shape for o in outs}) != 1:
        raise ShapeError(f"party outputs disagree in shape: {[o.shape for o in outs]}")
    total = outs[0].copy()
    for o in outs[1:]:
        total += o
    loss, dz = cross_entropy(total, labels, n_classes)
    messages, grads = [], {}
    for i, mdl in enumerate(models):
        g = _outbound(dz, i, active_index, defense, noise_rng)
        if i != active_index:
            messages.append(GradientMessage(i, epoch, step, g))
        rec, _ = backward(mdl, caches[i], g, epoch)
        grads[i] = rec
        sgd_step(mdl, rec, lr)
    return RoundOutcome(loss, messages, grads)


def split_round(models, top: ModelHandle, xs, labels, n_classes: int, lr: float,
                active_index: int, *, train_top: bool = True, defense: DefenseConfig | None = None,
                noise_rng: RngStream | None = None, epoch: int = 0, step: int = 0) -> RoundOutcome:
    """One SplitVFL step; party outputs are concatenated in party order."""
    outs, caches, _ = _forward_all(models, xs, epoch, step)
    widths = [o.shape[1] for o in outs]
    if sum(widths) != top.input_dim:
        raise ShapeError(f"top model expects {top.input_dim} inputs, parties send {sum(widths)}")
    y_cat = np.concatenate(outs, axis=1)
    scores, top_cache = forward(top, y_cat)
    loss, dz = cross_entropy(scores, labels, n_classes)
    top_rec, d_cat = backward(top, top_cache, dz, epoch)
    if train_top:
        sgd_step(top, top_rec, lr)
    messages, grads = [], {"top": top_rec}
    bounds = np.cumsum([0] + widths)
    for i, mdl in enumerate(models):
        # a message is a copy; a contiguous block also keeps BLAS summation order
        # identical to the AggVFL path
        g = np.ascontiguousarray(d_cat[:, bounds[i]:bounds[i + 1]])
        g = _outbound(g, i, active_index, defense, noise_rng)
        if i != active_index:
            messages.append(GradientMessage(i, epoch, step, g))
        rec, _ = backward(mdl, caches[i], g, epoch)
        grads[i] = rec
        sgd_step(mdl, rec, lr)
    return RoundOutcome(loss, messages, grads)


def global_scores(scenario, models, top, party_features) -> np.ndarray:
    outs = [forward(m, x)[0] for m, x in zip(models, party_features)]
    if scenario == "agg":
        total = outs[0].copy()
        for o in outs[1:]:
            total += o
        return total
    return forward(top, np.concatenate(outs, axis=1))[0]


def predict_global(scenario, models, top, party_features, n_classes, mapping=None) -> np.ndarray:
    pred = predict_labels(global_scores(scenario, models, top, party_features), n_classes)
    if mapping is not None:
        pred = invert_mapping(mapping)[pred]
    return pred


def train_federation(cfg: FederationConfig, test_parties=None, test_labels=None,
                     trace_path=None) -> FederationResult:
    """Run ``cfg.epochs`` epochs of benign federated training.

    ``test_parties`` (feature matrices or PartyViews in party order) and
    ``test_labels`` enable the no-attack accuracy. With ``trace_path`` the
    per-epoch trace is also written as JSON lines.
    """
    models, top = build_models(cfg)
    initial = [clone_model(m) for m in models]
    initial_top = clone_model(top) if top is not None else None
    mapping = cfg.defense.resolved_mapping(cfg.n_classes)
    y = cfg.labels if mapping is None else mapping[cfg.labels]
    xs_all = [p.features for p in cfg.parties]
    m = xs_all[0].shape[0]
    active, adversary = cfg.active_index, cfg.adversary_index
    noise_root = RngStream(cfg.seed, (STREAM_NOISE,))
    traces = []
    for epoch in range(cfg.epochs):
        loss_sum = 0.0
        norms = {i: 0.0 for i in range(len(models)) if i != active}
        first = {} if epoch == 0 else None
        adv_acc = None
        for step, idx in enumerate(batch_schedule(m, cfg.batch_size, cfg.seed, epoch)):
            xs = [x[idx] for x in xs_all]
            kw = dict(defense=cfg.defense, noise_rng=noise_root.child(epoch, step),
                      epoch=epoch, step=step)
            if cfg.scenario == "agg":
                res = agg_round(models, xs, y[idx], cfg.n_classes, cfg.lr, active, **kw)
            else:
                res = split_round(models, top, xs, y[idx], cfg.n_classes, cfg.lr, active,
                                  train_top=not cfg.fixed_unit_top, **kw)
            loss_sum += res.loss * len(idx)
            for msg in res.messages:
                norms[msg.party_id] += float(np.sum(msg.grad ** 2))
                if first is not None:
                    first.setdefault(msg.party_id, []).append(msg.grad)
            if epoch == 0 and adversary is not None:
                g = res.grads[adversary].flat * (len(idx) / m)
                adv_acc = g if adv_acc is None else adv_acc + g
        loss = loss_sum / m
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch)
        trace = RoundTrace(epoch, loss, {k: float(np.sqrt(v)) for k, v in norms.items()})
        if first is not None:
            trace.returned_grads = {k: np.concatenate(v, axis=0) for k, v in first.items()}
            if adv_acc is not None:
                trace.adversary_grad = GradientRecord(adv_acc, 0, initial[adversary].model_id)
        traces.append(trace)
        log.debug("epoch %d loss %.6f", epoch, loss)
    result = FederationResult(cfg, models, top, initial, initial_top, traces, mapping)
    if test_parties is not None and test_labels is not None:
        feats = [p.features if isinstance(p, PartyView) else np.asarray(p) for p in test_parties]
        result.naa = accuracy(result.predict(feats), test_labels)
    if trace_path is not None:
        Path(trace_path).write_text(result.trace_jsonl())
    return result
