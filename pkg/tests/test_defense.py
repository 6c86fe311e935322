import numpy as np
import pytest

from helpers import blob_parties
from lea_vfl.attack import AdversaryView, lea_attack, lea_select, true_sequence
from lea_vfl.clustering import ClusterAssignment
from lea_vfl.defense import (DefenseConfig, Resolution, apply_label_mapping, compress_gradient,
                             expected_accuracy, invert_mapping, laplace_noise, random_derangement,
                             resolve_clusters)
from lea_vfl.errors import ConfigError
from lea_vfl.numerics import RngStream
from lea_vfl.vfl import FederationConfig, train_federation


def test_laplace_identity_and_moments():
    g = np.arange(5.0)
    assert np.array_equal(laplace_noise(g, 0.0, RngStream(0)), g)
    draws = laplace_noise(np.zeros(1_000_000), 1.0, RngStream(1))
    assert abs(draws.mean()) < 0.01
    assert draws.var() == pytest.approx(2.0, rel=0.02)
    with pytest.raises(ValueError):
        laplace_noise(g, -1.0, RngStream(0))


def test_compression_rules():
    g = np.array([3.0, -1.0, 0.5])
    assert np.array_equal(compress_gradient(g, 1.0), g)
    assert np.array_equal(compress_gradient(g, 1 / 3), [3.0, 0.0, 0.0])
    ties = np.array([1.0, -1.0, 1.0, 0.5])
    assert np.array_equal(compress_gradient(ties, 0.5), [1.0, -1.0, 0.0, 0.0])
    x = np.random.default_rng(0).normal(size=(7, 3))
    once = compress_gradient(x, 0.25)
    assert once.shape == x.shape
    assert np.array_equal(compress_gradient(once, 0.25), once)
    k = int(np.ceil(0.25 * x.size))
    oracle = set(sorted(range(x.size), key=lambda i: -abs(x.ravel()[i]))[:k])
    assert set(np.flatnonzero(once.ravel())) == oracle
    with pytest.raises(ValueError):
        compress_gradient(x, 0.0)


def test_mapping_helpers():
    for n in (2, 3, 5, 10):
        d = random_derangement(n, RngStream(n))
        assert sorted(d.tolist()) == list(range(n)) and not np.any(d == np.arange(n))
    y = np.array([0, 2, 1, 1])
    assert np.array_equal(apply_label_mapping(y, [0, 1, 2]), y)
    m = [2, 0, 1]
    assert np.array_equal(invert_mapping(m)[apply_label_mapping(y, m)], y)
    with pytest.raises(ConfigError):
        apply_label_mapping(y, [0, 0, 1])
    with pytest.raises(ValueError):
        random_derangement(1, RngStream(0))


def test_defense_config_validation():
    with pytest.raises(ConfigError) as err:
        DefenseConfig("noise", laplace_scale=-1, keep_ratio=0, sigma=2)
    assert len(err.value.problems) == 4
    assert DefenseConfig("label_map", mapping=(1, 0)).resolved_mapping(2).tolist() == [1, 0]
    with pytest.raises(ConfigError):
        DefenseConfig("label_map", mapping=(1, 0)).resolved_mapping(3)
    assert DefenseConfig("none").resolved_mapping(3) is None


def test_resolution_paths():
    labels = np.repeat([0, 1, 2], 10)
    assign = np.array([2, 0, 1])[labels]
    sizes = np.bincount(assign, minlength=3)
    none = resolve_clusters(assign, sizes, 3, labels, 0.0, RngStream(0))
    assert none.cluster_to_label == {} and none.unresolved == (0, 1, 2)
    two = resolve_clusters(assign, sizes, 3, labels, 0.67, RngStream(0))
    assert two.cluster_to_label == {2: 0, 0: 1, 1: 2}
    assert sorted(two.method.values()) == ["auxiliary", "auxiliary", "elimination"]
    bin_labels = np.array([0] * 100 + [1] * 10)
    skew = resolve_clusters(1 - bin_labels, [10, 100], 2, bin_labels, 0.0, RngStream(0),
                            prior_ranking=[0, 1])
    assert skew.cluster_to_label == {1: 0, 0: 1} and set(skew.method.values()) == {"size"}
    half = resolve_clusters(bin_labels, [100, 10], 2, bin_labels, 0.5, RngStream(0))
    assert len(half.cluster_to_label) == 2
    # floor: sigma just below 1/2 reveals nothing on a binary task
    assert resolve_clusters(bin_labels, [100, 10], 2, bin_labels, 0.49, RngStream(0)).cluster_to_label == {}
    with pytest.raises(ValueError):
        resolve_clusters(assign, sizes, 3, np.zeros(30, dtype=int), 0.67, RngStream(0))


def test_expected_accuracy_is_chance_for_balanced_unknowns():
    labels = np.repeat([0, 1, 2], 20)
    res = Resolution({}, {}, (0, 1, 2), (0, 1, 2))
    exp, sampled = expected_accuracy(labels, labels, res, RngStream(0))
    assert exp == pytest.approx(1 / 3)
    assert sampled in (0.0, 1 / 3, 1.0)
    known = Resolution({0: 0, 1: 1, 2: 2}, {}, (), ())
    assert expected_accuracy(labels, labels, known, RngStream(0)) == (1.0, 1.0)


def test_mapping_keeps_naa_and_permutes_chosen_sequence():
    parties, y = blob_parties(3, 60, seed=1)
    base = dict(epochs=60, lr=0.1, seed=1)
    plain = train_federation(FederationConfig("agg", parties, 3, "lr", **base), parties, y)
    mapping = (2, 0, 1)
    mapped = train_federation(FederationConfig("agg", parties, 3, "lr",
                                               defense=DefenseConfig("label_map", mapping=mapping),
                                               **base), parties, y)
    assert abs(plain.naa - mapped.naa) <= 0.01
    cl = ClusterAssignment(y.copy(), np.zeros((3, 1)), 3)
    seq0 = lea_select(AdversaryView.from_federation(plain), cl)[0]
    seq1 = lea_select(AdversaryView.from_federation(mapped), cl)[0]
    assert seq0 == true_sequence(cl, y)
    assert seq1 == tuple(int(mapping[s]) for s in seq0)


def test_gradient_defenses_only_touch_outbound_messages():
    parties, y = blob_parties(2, 40, seed=2)
    base = dict(epochs=3, lr=0.1, seed=2)
    plain = train_federation(FederationConfig("agg", parties, 2, "lr", **base))
    noisy = train_federation(FederationConfig("agg", parties, 2, "lr",
                                              defense=DefenseConfig("laplace", laplace_scale=0.5), **base))
    # the adversary's received first-epoch gradient differs
    assert not np.array_equal(plain.traces[0].returned_grads[0], noisy.traces[0].returned_grads[0])
    # the active party's first update used the clean gradient
    one = dict(base, epochs=1)
    p1 = train_federation(FederationConfig("agg", parties, 2, "lr", **one))
    n1 = train_federation(FederationConfig("agg", parties, 2, "lr",
                                           defense=DefenseConfig("laplace", laplace_scale=0.5), **one))
    assert np.array_equal(p1.models[1].params(), n1.models[1].params())
    assert not np.array_equal(p1.models[0].params(), n1.models[0].params())
