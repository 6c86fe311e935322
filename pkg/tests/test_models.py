import numpy as np
import pytest

from helpers import central_difference, federation_gradcheck, rel_err, tensor_slices
from lea_vfl.errors import ShapeError, StaleCacheError
from lea_vfl.models import (GradientRecord, ModelHandle, backward, clone_model, forward, init_model,
                            load_model, mlp_dims, save_model, set_params, sgd_step)
from lea_vfl.numerics import RngStream
from lea_vfl.objective import cross_entropy


def test_init_counts_and_bounds():
    lr = init_model("lr", (30, 1), RngStream(0))
    assert lr.n_params == 31
    mlp = init_model("mlp", (6, 5, 3), RngStream(1))
    assert np.all(np.abs(mlp.weights[0]) <= 1 / np.sqrt(6))
    pos = init_model("mlp", (6, 5, 3), RngStream(1), positive_only=True)
    assert pos.params().min() > 0
    assert np.all(pos.weights[1] <= 1 / np.sqrt(5))
    again = init_model("mlp", (6, 5, 3), RngStream(1))
    assert np.array_equal(mlp.params(), again.params())
    with pytest.raises(ShapeError):
        init_model("lr", (3, 2, 1), RngStream(0))
    with pytest.raises(ShapeError):
        init_model("mlp", (3,), RngStream(0))


def test_forward_examples():
    m = ModelHandle("lr", (2, 1), [np.array([[1.0], [1.0]])], [np.zeros(1)])
    assert forward(m, [[2.0, 3.0]])[0].item() == 5.0
    z = init_model("lr", (4, 2), RngStream(0), zero=True)
    assert np.array_equal(forward(z, np.ones((3, 4)))[0], np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        forward(z, np.ones((3, 5)))


def test_forward_matches_straight_line_recomputation():
    m = init_model("mlp", (4, 6, 5, 3), RngStream(2))
    x = np.random.default_rng(0).normal(size=(7, 4))
    h = x
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        z = np.array([[sum(h[r, k] * w[k, c] for k in range(w.shape[0])) + b[c]
                       for c in range(w.shape[1])] for r in range(h.shape[0])])
        h = 1 / (1 + np.exp(-z)) if i < 2 else z
    assert np.allclose(forward(m, x)[0], h, atol=1e-12)


def test_backward_examples():
    m = ModelHandle("lr", (1, 1), [np.array([[0.3]])], [np.array([0.1])])
    _, cache = forward(m, [[2.0]])
    rec, dx = backward(m, cache, [[0.5]])
    assert rec.flat.tolist() == [1.0, 0.5]
    assert dx.item() == pytest.approx(0.15)
    rec0, _ = backward(m, cache, [[0.0]])
    assert not rec0.flat.any()


@pytest.mark.parametrize("dims,act", [((5, 1), False), ((5, 3), False), ((5, 4, 3), False),
                                      ((5, 6, 4), True), ((4, 3, 3, 2), False)])
def test_backward_finite_differences(dims, act):
    kind = "lr" if len(dims) == 2 else "mlp"
    m = init_model(kind, dims, RngStream(3), output_activation=act)
    g = np.random.default_rng(4)
    x = g.normal(size=(8, dims[0]))
    up = g.normal(size=(8, dims[-1]))

    def f():
        return float((forward(m, x)[0] * up).sum())

    out, cache = forward(m, x)
    rec, dx = backward(m, cache, up)
    for arr, a, b in tensor_slices(m):
        assert rel_err(rec.flat[a:b].reshape(arr.shape), central_difference(f, arr)) < 1e-6
    assert rel_err(dx, central_difference(f, x)) < 1e-6


@pytest.mark.parametrize("scenario", ["agg", "split"])
@pytest.mark.parametrize("kind", ["lr", "mlp"])
@pytest.mark.parametrize("n_classes", [2, 3])
def test_federated_gradients_finite_differences(scenario, kind, n_classes):
    assert federation_gradcheck(scenario, kind, n_classes, seed=11) < 1e-5


def test_stale_cache_rejected():
    m = init_model("lr", (3, 1), RngStream(0))
    _, cache = forward(m, np.ones((2, 3)))
    rec, _ = backward(m, cache, np.ones((2, 1)))
    sgd_step(m, rec, 0.1)
    with pytest.raises(StaleCacheError):
        backward(m, cache, np.ones((2, 1)))
    other = clone_model(m)
    _, cache2 = forward(other, np.ones((2, 3)))
    with pytest.raises(StaleCacheError):
        backward(m, cache2, np.ones((2, 1)))
    with pytest.raises(StaleCacheError):
        backward(m, None, np.ones((2, 1)))


def test_sgd_step_rules():
    m = ModelHandle("lr", (1, 1), [np.array([[1.0]])], [np.array([1.0])])
    sgd_step(m, GradientRecord(np.array([2.0, 2.0]), 0, m.model_id), 0.5)
    assert m.params().tolist() == [0.0, 0.0]
    before = m.params().copy()
    sgd_step(m, GradientRecord(np.array([3.0, 1.0]), 0, m.model_id), 0.0)
    assert np.array_equal(m.params(), before)
    with pytest.raises(ValueError):
        sgd_step(m, GradientRecord(np.zeros(2), 0, "someone-else"), 0.1)
    with pytest.raises(ShapeError):
        sgd_step(m, GradientRecord(np.zeros(3), 0, m.model_id), 0.1)


def test_sgd_plus_minus_round_trip():
    # dyadic values: every product and difference is exact in binary floating point
    m = ModelHandle("mlp", (2, 2, 1), [np.array([[0.5, -1.25], [2.0, 0.75]]), np.array([[1.5], [-0.25]])],
                    [np.array([0.125, -0.5]), np.array([0.0])])
    start = m.params().copy()
    g = np.array([0.25, -0.5, 1.0, 0.125, 0.5, -0.25, 0.75, 0.375, -1.0])
    sgd_step(m, GradientRecord(g, 0, m.model_id), 0.5)
    sgd_step(m, GradientRecord(-g, 0, m.model_id), 0.5)
    assert np.array_equal(m.params(), start)


def test_clone_isolation_and_checkpoint(tmp_path):
    m = init_model("mlp", (3, 4, 2), RngStream(5))
    c = clone_model(m)
    assert np.array_equal(c.params(), m.params()) and c.model_id != m.model_id
    _, cache = forward(c, np.ones((1, 3)))
    rec, _ = backward(c, cache, np.ones((1, 2)))
    sgd_step(c, rec, 1.0)
    assert not np.array_equal(c.params(), m.params())
    path = tmp_path / "m.json"
    save_model(m, path)
    back = load_model(path)
    assert np.array_equal(back.params(), m.params()) and back.layer_dims == m.layer_dims
    set_params(back, np.zeros(back.n_params))
    assert not back.params().any()
    with pytest.raises(ShapeError):
        set_params(back, np.zeros(3))


def test_cross_entropy_gradient_and_binary_link():
    g = np.random.default_rng(6)
    s = g.normal(size=(10, 1))
    y = g.integers(0, 2, 10)
    w = g.random(10) + 0.5
    loss, grad = cross_entropy(s, y, 2, w)
    num = central_difference(lambda: cross_entropy(s, y, 2, w)[0], s)
    assert rel_err(grad, num) < 1e-7
    # one sigmoid score is a two-way softmax over (0, s)
    two = np.column_stack([np.zeros(10), s[:, 0]])
    logp = two - np.logaddexp(0, s)
    direct = -np.dot(w, logp[np.arange(10), y]) / w.sum()
    assert loss == pytest.approx(direct, abs=1e-12)
    with pytest.raises(ShapeError):
        cross_entropy(np.zeros((4, 2)), [0, 1, 2, 1], 3)
    assert cross_entropy(np.zeros((4, 1)), [0, 1, 0, 1], 2)[0] == pytest.approx(np.log(2), abs=1e-12)


def test_mlp_dims():
    assert mlp_dims(30, (128, 64), 1) == (30, 128, 64, 1)
