import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlucompress.compressed_map import CompressedWeightMap
from nlucompress.datasets import probe_keys
from nlucompress.hashing import hash64
from nlucompress.mphf import DuplicateKeyError, Mphf, construct_indexed


def assert_bijection(mphf, keys):
    out = [mphf.evaluate(k) for k in keys]
    assert sorted(out) == list(range(len(keys)))
    assert np.array_equal(mphf.evaluate_many(keys), out)


def fall_through_probability(mphf):
    """Chance that a random non-member misses every level's ones."""
    p = 1.0
    for i, size in enumerate(mphf.level_sizes):
        lo, hi = mphf.level_offsets[i], mphf.level_offsets[i + 1]
        ones = mphf.bits.rank(int(hi)) - mphf.bits.rank(int(lo))
        p *= 1 - ones / size
    return p


def test_singleton():
    m = Mphf.construct([b"a"])
    assert m.level_sizes == [1]
    assert m.bits.get(0) == 1
    assert m.evaluate(b"a") == 0
    assert m.evaluate("a") == 0


def test_empty():
    m = Mphf.construct([])
    assert m.n_levels == 0
    assert m.n_keys == 0
    assert m.evaluate(b"anything") is None
    assert list(m.evaluate_many([b"x", b"y"])) == [-1, -1]


def test_empty_string_key_is_legal():
    keys = [b"", b"a", b"b"]
    assert_bijection(Mphf.construct(keys), keys)


def test_duplicates_rejected():
    with pytest.raises(DuplicateKeyError) as e:
        Mphf.construct([b"x", b"y", b"x"])
    assert e.value.key == b"x"
    with pytest.raises(DuplicateKeyError):
        Mphf.construct(["x", b"x"])


def test_bijection_10k():
    keys = [b"key-%d" % i for i in range(10_000)]
    m, idx = construct_indexed(keys)
    assert np.array_equal(np.sort(idx), np.arange(10_000))
    assert_bijection(m, keys)
    assert np.array_equal(m.evaluate_many(keys), idx)


@settings(max_examples=60, deadline=None)
@given(st.sets(st.binary(max_size=24), max_size=200))
def test_bijection_property(keys):
    keys = list(keys)
    m = Mphf.construct(keys)
    assert m.n_keys == len(keys)
    assert sorted(m.evaluate(k) for k in keys) == list(range(len(keys)))


def test_level_i_uses_seed_i():
    keys = [b"s%d" % i for i in range(300)]
    m = Mphf.construct(keys)
    for k in keys:
        for i, size in enumerate(m.level_sizes):
            pos = int(m.level_offsets[i]) + hash64(k, i) % size
            if m.bits.get(pos):
                assert m.evaluate(k) == m.bits.rank(pos)
                break


def test_invariants(random_keys_1e5):
    m = Mphf.construct(random_keys_1e5)
    assert sum(m.level_sizes) == len(m.bits)
    assert m.bits.total + len(m.spill) == m.n_keys == len(random_keys_1e5)
    assert m.level_sizes == m.level_inputs  # load factor 1
    placed = [m.level_inputs[i] - m.level_inputs[i + 1] for i in range(m.n_levels - 1)]
    for i, p in enumerate(placed):
        if p:
            assert m.level_inputs[i + 1] < m.level_inputs[i]


def test_survival_rate(random_keys_1e5):
    m = Mphf.construct(random_keys_1e5)
    rates = [b / a for a, b in zip(m.level_inputs, m.level_inputs[1:]) if a >= 10_000]
    assert rates
    for r, a in zip(rates, m.level_inputs):
        expected = 1 - (1 - 1 / a) ** (a - 1)
        assert abs(r - expected) <= 0.02


def test_total_level_bits_near_e_times_n(random_keys_1e5):
    n = len(random_keys_1e5)
    m = Mphf.construct(random_keys_1e5)
    # survival q = 1 - 1/e per level, so the sizes sum to n / (1 - q) = e * n
    assert abs(len(m.bits) / (math.e * n) - 1) <= 0.10


def test_spill_keeps_minimality():
    keys = [b"sp%d" % i for i in range(2000)]
    m, idx = construct_indexed(keys, max_levels=2)
    assert m.n_levels == 2
    assert len(m.spill) > 0
    assert sorted(m.spill.values()) == list(range(m.bits.total, 2000))
    assert_bijection(m, keys)
    assert np.array_equal(m.evaluate_many(keys), idx)


def test_zero_levels_spills_everything():
    keys = [b"a", b"b", b"c"]
    m = Mphf.construct(keys, max_levels=0)
    assert m.n_levels == 0
    assert sorted(m.spill.values()) == [0, 1, 2]
    assert m.evaluate(b"zzz") is None


def test_gamma_above_one():
    keys = [b"g%d" % i for i in range(5000)]
    m = Mphf.construct(keys, gamma=2.0)
    assert m.level_sizes[0] == 10_000
    assert_bijection(m, keys)


def test_gamma_below_one_rejected():
    with pytest.raises(ValueError):
        Mphf.construct([b"a"], gamma=0.5)


def test_nonmember_collision_rate_load_factor_one(random_keys_1e5, probes_1e6):
    m = Mphf.construct(random_keys_1e5)
    assert not m.spill
    # the final level placed all of its keys, so every bucket there is a one
    assert fall_through_probability(m) == 0.0
    hit = m.evaluate_many(probes_1e6) >= 0
    assert hit.mean() == 1.0


def test_nonmember_fall_through_matches_level_occupancy():
    keys = [b"oc%d" % i for i in range(20_000)]
    m = Mphf.construct(keys, gamma=2.0)
    predicted = fall_through_probability(m)
    probes = probe_keys(400_000, seed=3)
    measured = float((m.evaluate_many(probes) < 0).mean())
    sigma = math.sqrt(predicted * (1 - predicted) / len(probes))
    assert abs(measured - predicted) <= 5 * sigma + 1e-6


def test_serialization_roundtrip_preserves_evaluate(map_10k):
    cmap = CompressedWeightMap.build(map_10k, 16, 1.0, max_levels=3)
    buf = io.BytesIO()
    cmap.save(buf)
    loaded = CompressedWeightMap.from_bytes(buf.getvalue()).mphf
    keys = list(map_10k)
    assert loaded.spill == cmap.mphf.spill
    assert np.array_equal(loaded.evaluate_many(keys), cmap.mphf.evaluate_many(keys))
