"""Shared oracles and fixtures for the test-suite."""
import numpy as np

from lea_vfl.data import PartyView, make_blobs, vertical_split, VerticalPartition
from lea_vfl.models import clone_model
from lea_vfl.numerics import RngStream
from lea_vfl.objective import cross_entropy
from lea_vfl.vfl import FederationConfig, agg_round, build_models, global_scores, split_round


def rel_err(a, b) -> float:
    """||a - b|| / max(||a||, ||b||), 0 when both vanish."""
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def central_difference(f, arr, h=1e-6):
    """Numerical gradient of scalar f() w.r.t. the array ``arr``, perturbed in place."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        up = f()
        arr[i] = old - h
        down = f()
        arr[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def tensor_slices(model):
    """(array, start, stop) for every weight and bias in flat-gradient order."""
    out, pos = [], 0
    for w, b in zip(model.weights, model.biases):
        out.append((w, pos, pos + w.size))
        pos += w.size
        out.append((b, pos, pos + b.size))
        pos += b.size
    return out


def random_parties(rng_seed, n_classes, counts, m):
    g = np.random.default_rng(rng_seed)
    x = g.normal(size=(m, sum(counts)))
    y = g.integers(0, n_classes, size=m)
    y[:n_classes] = np.arange(n_classes)
    from lea_vfl.data import Dataset
    return vertical_split(Dataset(x, y, n_classes), VerticalPartition(counts)), y


def federation_gradcheck(scenario, kind, n_classes, seed, hidden=(5, 4), counts=(3, 2), m=6):
    """Largest relative error between analytic and numeric gradients of every tensor."""
    parties, y = random_parties(seed, n_classes, counts, m)
    cfg = FederationConfig(scenario, parties, n_classes, kind, hidden=hidden, seed=seed,
                           top_positive=False)
    models, top = build_models(cfg)
    xs = [p.features for p in parties]

    def loss():
        return cross_entropy(global_scores(scenario, models, top, xs), y, n_classes)[0]

    probe_models = [clone_model(mdl) for mdl in models]
    probe_top = clone_model(top) if top is not None else None
    if scenario == "agg":
        out = agg_round(probe_models, xs, y, n_classes, 0.0, cfg.active_index)
    else:
        out = split_round(probe_models, probe_top, xs, y, n_classes, 0.0, cfg.active_index)
    worst = 0.0
    owners = list(enumerate(models)) + ([("top", top)] if top is not None else [])
    for key, mdl in owners:
        flat = out.grads[key].flat
        for arr, a, b in tensor_slices(mdl):
            num = central_difference(loss, arr)
            worst = max(worst, rel_err(flat[a:b].reshape(arr.shape), num))
    return worst


def blob_parties(n_classes, per_class, seed, separation=10.0, adv_features=None):
    """Blobs whose class structure lives in the adversary's slice."""
    f = n_classes if adv_features is None else adv_features
    ds = make_blobs(n_classes, per_class, 2 * f, separation, RngStream(seed, (1,)))
    return vertical_split(ds, VerticalPartition((f, f))), ds.labels
