import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nearconvex.dataset import DataError, WeightedPointSet
from nearconvex.sampler import sample_coreset, sample_size
from nearconvex.sensitivity import lz_sensitivities
from nearconvex.streaming import (StreamState, min_leaf_size, per_level_params, stream_coreset,
                                  stream_finish, stream_push)


def lz2(ps):
    return lz_sensitivities(ps, 2.0)


def batches(rng, n_batches, size, d=3):
    return [WeightedPointSet(rng.standard_normal((size, d))) for _ in range(n_batches)]


def state(**kw):
    base = dict(profile_fn=lz2, leaf_size=16, eps=0.5, delta=0.1, horizon=1024, d_prime=4,
                seed=0, max_node_size=20)
    base.update(kw)
    return StreamState(**base)


def test_per_level_params():
    e, dl = per_level_params(0.2, 0.1, 1024)
    assert e == pytest.approx(0.01) and dl == pytest.approx(0.005)
    assert per_level_params(0.2, 0.1, 2) == (0.1, 0.05)
    with pytest.raises(ValueError):
        per_level_params(0.2, 0.1, 0)


@given(st.integers(2, 2 ** 20), st.floats(0.001, 0.999))
def test_compounding(n, eps):
    e, _ = per_level_params(eps, 0.5, n)
    L = math.log2(n)
    assert (1 + e) ** L <= 1 + eps
    assert (1 - e) ** L >= 1 - eps


def test_min_leaf_size_gate():
    assert min_leaf_size(0.5) == 2
    assert min_leaf_size(0.8) == pytest.approx(16)
    with pytest.raises(ValueError):
        min_leaf_size(1.0)


def trace(s, bs):
    live = []
    for b in bs:
        s.push(b)
        live.append(s.live)
    return live


def test_one_batch_is_the_leaf(rng):
    s = state()
    (b,) = batches(rng, 1, 32)
    s.push(b)
    cs, pts = s.finish()
    assert s.height == 1 and s.merge_depth == 0
    m = min(20, sample_size(lz2(b).total, 4, s.eps_prime, s.delta_prime))
    ref = sample_coreset(b, lz2(b), m, seed=0)
    assert np.array_equal(cs.indices, ref.indices)
    assert np.array_equal(cs.weights, ref.weights)


def test_single_leaf_matches_batch_without_cap(rng):
    (b,) = batches(rng, 1, 32)
    big = WeightedPointSet(np.vstack([b.points] * 40))
    s = StreamState(lz2, 640, 0.9, 0.9, 4, 4, c_const=1, seed=3)
    s.push(big)
    cs, _ = s.finish()
    m = sample_size(lz2(big).total, 4, s.eps_prime, s.delta_prime)
    assert m < big.n
    ref = sample_coreset(big, lz2(big), m, seed=3)
    assert np.array_equal(cs.indices, ref.indices) and np.array_equal(cs.weights, ref.weights)


def test_two_batches_one_merge(rng):
    s = state()
    live = trace(s, batches(rng, 2, 32))
    assert s.node_sizes.keys() == {1, 2} and len(s.node_sizes[2]) == 1
    assert max(live) <= 2 and s.max_live <= 2
    assert s.merge_depth == 1


def test_eight_batches(rng):
    s = state()
    trace(s, batches(rng, 8, 32))
    assert s.merge_depth == 3 and s.height == 4
    assert s.max_live <= 4
    assert [len(s.node_sizes[j]) for j in (1, 2, 3, 4)] == [8, 4, 2, 1]
    assert s.live == 1


def test_three_batches_fold(rng):
    s = state()
    trace(s, batches(rng, 3, 32))
    assert s.buckets[1] and s.buckets[2]
    cs, pts = s.finish()
    # the pending level-2 node is folded with the orphan leaf into one root
    assert 3 not in s.node_sizes  # folding leaves the stream state untouched
    assert len(cs) == pts.n <= 20
    assert cs.provenance["node_sizes"][3] == [pts.n]


def test_finish_is_repeatable(rng):
    s = state()
    bs = batches(rng, 5, 32)
    trace(s, bs[:3])
    a, _ = s.finish()
    b, _ = s.finish()
    assert np.array_equal(a.indices, b.indices) and np.array_equal(a.weights, b.weights)
    trace(s, bs[3:])
    fresh = state()
    trace(fresh, bs)
    c, _ = s.finish()
    d, _ = fresh.finish()
    assert np.array_equal(c.indices, d.indices) and np.array_equal(c.weights, d.weights)


def test_bucket_bound_on_long_stream(rng):
    n, leaf = 10_000, 64
    s = StreamState(lz2, leaf, 0.5, 0.1, n, 4, seed=0, max_node_size=40)
    X = rng.standard_normal((n, 3))
    for lo in range(0, n, 2 * leaf):
        s.push(WeightedPointSet(X[lo:lo + 2 * leaf]))
        assert s.live <= s.height + 1
    assert s.max_live <= math.ceil(math.log2(n / leaf)) + 1
    assert s.partial_batches == 1


def test_sources_and_weights_track_stream(rng):
    bs = batches(rng, 6, 32)
    cs, pts, s = stream_coreset(bs, lz2, leaf_size=16, eps=0.5, delta=0.1, horizon=512,
                                d_prime=4, seed=1, max_node_size=25)
    allX = np.vstack([b.points for b in bs])
    assert np.array_equal(pts.points, allX[cs.indices])
    assert np.array_equal(pts.weights, cs.weights)
    # weights carry the whole stream's mass in expectation; here a loose sanity bound
    assert 0.2 * 192 < pts.total_weight < 5 * 192


def test_pass_through_when_sample_exceeds_node(rng):
    s = StreamState(lz2, 16, 0.2, 0.1, 10_000, 4, seed=0)
    bs = batches(rng, 4, 32)
    trace(s, bs)
    cs, pts = s.finish()
    assert np.array_equal(cs.indices, np.arange(128))
    assert np.all(cs.weights == 1.0)


def test_push_errors(rng):
    s = state()
    with pytest.raises(DataError):
        s.push(WeightedPointSet(np.ones((33, 3))))
    with pytest.raises(DataError, match="empty stream"):
        s.finish()
    with pytest.raises(ValueError):
        state(leaf_size=0)
    with pytest.raises(ValueError):
        state(eps=1.5)


def test_functional_wrappers(rng):
    s = state()
    for b in batches(rng, 2, 32):
        stream_push(s, b)
    cs, _ = stream_finish(s)
    assert cs.provenance["eps_prime"] == s.eps_prime
    assert cs.provenance["delta_prime"] == s.delta_prime


def test_provenance_eps_prime(rng):
    s = state(eps=0.2, horizon=10_000)
    trace(s, batches(rng, 2, 32))
    prov = s.finish()[0].provenance
    assert prov["eps_prime"] == pytest.approx(0.2 / (2 * math.log2(10_000)), rel=1e-15)
