import io

import numpy as np
import pytest

from racekde.lsh import LshConfig
from racekde.sketch import (
    ConfigMismatchError,
    EmptySketchError,
    HEADER_SIZE,
    KdeEstimate,
    RaceSketch,
    SketchFormatError,
    UnmatchedDeletionError,
    ace_variance_bound,
    rehashed_variance_bound,
)
from racekde.vectors import DataVector

RNG = np.random.default_rng(42)


def l2_cfg(rows=20, hash_range=8, seed=1, dim=6, power=1, sigma=1.0):
    return LshConfig("l2", dim, sigma, power, rows, hash_range, seed)


def srp_cfg(rows=20, power=3, seed=1, dim=6):
    return LshConfig("srp", dim, 0.0, power, rows, 2**power, seed)


def rand_vec(dim=6):
    return DataVector.dense(RNG.normal(size=dim))


def test_new_sketch_is_zero():
    s = RaceSketch(l2_cfg())
    assert s.items == 0
    assert np.all(s._dense_counts() == 0)
    assert s.memory_bytes() > 0
    with pytest.raises(EmptySketchError):
        s.raw_query(rand_vec())


def test_add_remove_inverse():
    s = RaceSketch(l2_cfg())
    empty = s.to_bytes()
    x = rand_vec()
    s.add(x)
    s.remove(x)
    assert s.items == 0
    assert s.to_bytes() == empty


def test_double_add_doubles_slots():
    s = RaceSketch(l2_cfg())
    x = rand_vec()
    s.add(x)
    s.add(x)
    counters = s.raw_query(x)
    assert np.all(counters == 2)


def test_remove_on_empty_errors():
    s = RaceSketch(l2_cfg())
    with pytest.raises(UnmatchedDeletionError):
        s.remove(rand_vec())


def test_remove_absent_vector_errors():
    s = RaceSketch(l2_cfg(hash_range=1024))
    s.add(rand_vec())
    with pytest.raises(UnmatchedDeletionError):
        s.remove(rand_vec())


def test_row_sums_track_items():
    s = RaceSketch(l2_cfg())
    xs = [rand_vec() for _ in range(10)]
    for x in xs:
        s.add(x)
    s.remove(xs[3])
    other = RaceSketch(l2_cfg())
    other.add(xs[3])
    merged = s.merge(other)
    for sk in (s, merged):
        sums = sk._dense_counts().sum(axis=1)
        assert np.all(sums == sk.items)


def test_merge_identity():
    s = RaceSketch(l2_cfg())
    for _ in range(7):
        s.add(rand_vec())
    empty = RaceSketch(l2_cfg())
    assert s.merge(empty).to_bytes() == s.to_bytes()


def test_merge_equals_joint_build():
    cfg = l2_cfg(rows=16)
    d1 = [rand_vec() for _ in range(9)]
    d2 = [rand_vec() for _ in range(5)]
    a = RaceSketch(cfg)
    b = RaceSketch(cfg)
    joint = RaceSketch(cfg)
    for x in d1:
        a.add(x)
        joint.add(x)
    for x in d2:
        b.add(x)
        joint.add(x)
    assert a.merge(b).to_bytes() == joint.to_bytes()


def test_merge_mismatch_names_field():
    a = RaceSketch(l2_cfg(seed=1))
    b = RaceSketch(l2_cfg(seed=2))
    with pytest.raises(ConfigMismatchError, match="seed"):
        a.merge(b)


def test_order_invariance():
    cfg = srp_cfg()
    xs = [rand_vec() for _ in range(12)]
    a = RaceSketch(cfg)
    b = RaceSketch(cfg)
    for x in xs:
        a.add(x)
    for x in reversed(xs):
        b.add(x)
    assert a.to_bytes() == b.to_bytes()


def test_add_matrix_matches_adds():
    cfg = l2_cfg(rows=30, hash_range=64)
    X = RNG.normal(size=(25, 6))
    bulk = RaceSketch(cfg)
    bulk.add_matrix(X)
    oneby = RaceSketch(cfg)
    for row in X:
        oneby.add(DataVector.dense(row))
    assert bulk == oneby


def test_remove_matrix_restores():
    cfg = l2_cfg(rows=10)
    X = RNG.normal(size=(20, 6))
    s = RaceSketch(cfg)
    s.add_matrix(X)
    before = s.to_bytes()
    s.add_matrix(X[:7])
    s.remove_matrix(X[:7])
    assert s.to_bytes() == before


def test_single_point_query_is_one():
    cfg = srp_cfg()
    s = RaceSketch(cfg)
    x = rand_vec()
    s.add(x)
    assert np.all(s.raw_query(x) == 1)
    est = s.estimate_finite(x, groups=5)
    assert est.value == 1.0


def test_estimate_group_median():
    # 3 groups over 6 rows; forced counters give means {0.2, 0.4, 0.9}
    cfg = srp_cfg(rows=6, power=1)
    s = RaceSketch(cfg)
    s.items = 10
    x = rand_vec()
    from racekde.lsh import hash_all

    slots = hash_all(cfg, x).astype(np.int64)
    per_row = [2, 2, 4, 4, 9, 9]
    for l, (slot, c) in enumerate(zip(slots, per_row)):
        s._counts[l, slot] = c
    est = s.estimate_finite(x, groups=3)
    assert est.groups == 3
    assert list(est.group_means) == [0.2, 0.4, 0.9]
    assert est.value == 0.4


def test_estimate_group_validation():
    s = RaceSketch(srp_cfg(rows=10))
    s.add(rand_vec())
    q = rand_vec()
    with pytest.raises(ValueError):
        s.estimate_finite(q, groups=4)  # even
    with pytest.raises(ValueError):
        s.estimate_finite(q, groups=11)  # > rows
    with pytest.raises(ValueError):
        RaceSketch(l2_cfg()).estimate_finite(q)  # wrong family


def test_rehashed_debias_points():
    cfg = l2_cfg(rows=3, hash_range=4)
    s = RaceSketch(cfg)
    s.items = 100
    x = rand_vec()
    from racekde.lsh import hash_all

    slots = hash_all(cfg, x).astype(np.int64)
    # raw ratio exactly 1/R in every row -> estimate 0
    for l, slot in enumerate(slots):
        s._counts[l, slot] = 25
    assert s.estimate_rehashed(x, groups=3).value == 0.0
    # every counter equals items -> estimate 1
    for l, slot in enumerate(slots):
        s._counts[l, slot] = 100
    assert s.estimate_rehashed(x, groups=3).value == 1.0
    # substitution: ratio 0.4 at R=4 -> (0.4 - 0.25) * 4/3 = 0.2
    for l, slot in enumerate(slots):
        s._counts[l, slot] = 40
    assert s.estimate_rehashed(x, groups=3).value == pytest.approx(0.2)


def test_negative_estimates_returned_and_clampable():
    cfg = l2_cfg(rows=3, hash_range=4)
    s = RaceSketch(cfg)
    s.items = 100
    x = rand_vec()
    est = s.estimate_rehashed(x, groups=3)  # all counters zero
    assert est.value < 0
    assert RaceSketch.clamped_value(est) == 0.0


def test_memory_bytes_matches_serialized_size():
    for cfg, storage in [
        (l2_cfg(rows=2, hash_range=4), "dense"),
        (l2_cfg(rows=3, hash_range=1 << 20), "sparse"),
        (srp_cfg(rows=4), "auto"),
    ]:
        s = RaceSketch(cfg, storage)
        assert s.memory_bytes() == len(s.to_bytes())
        before = s.memory_bytes()
        s.add(rand_vec())
        assert s.memory_bytes() == len(s.to_bytes())
        assert s.memory_bytes() >= before


def test_empty_dense_size_is_header_plus_one_byte_per_counter():
    s = RaceSketch(l2_cfg(rows=2, hash_range=4), "dense")
    assert len(s.to_bytes()) == HEADER_SIZE + 2 * 4 + 4


def test_sparse_empty_smaller_than_dense():
    cfg = l2_cfg(rows=4, hash_range=16)
    assert (
        RaceSketch(cfg, "sparse").memory_bytes()
        < RaceSketch(cfg, "dense").memory_bytes()
    )


def test_roundtrip_dense_and_sparse():
    for storage, hash_range in [("dense", 8), ("sparse", 1 << 30)]:
        cfg = l2_cfg(rows=6, hash_range=hash_range)
        s = RaceSketch(cfg, storage)
        for _ in range(15):
            s.add(rand_vec())
        data = s.to_bytes()
        back = RaceSketch.from_bytes(data)
        assert back == s
        assert back.to_bytes() == data
        assert back.storage == storage


def test_roundtrip_via_stream():
    s = RaceSketch(srp_cfg())
    s.add(rand_vec())
    buf = io.BytesIO()
    s.serialize(buf)
    buf.seek(0)
    assert RaceSketch.deserialize(buf) == s


def test_bad_magic_rejected():
    data = bytearray(RaceSketch(l2_cfg()).to_bytes())
    data[0] ^= 0xFF
    with pytest.raises(SketchFormatError):
        RaceSketch.from_bytes(bytes(data))


def test_truncation_rejected():
    data = RaceSketch(l2_cfg()).to_bytes()
    with pytest.raises(SketchFormatError):
        RaceSketch.from_bytes(data[: len(data) - 3])


def test_checksum_rejected():
    data = bytearray(RaceSketch(l2_cfg()).to_bytes())
    data[HEADER_SIZE + 1] ^= 0x01
    with pytest.raises(SketchFormatError):
        RaceSketch.from_bytes(bytes(data))


def test_counter_width_narrows_file():
    cfg = srp_cfg(rows=2, power=1)
    s = RaceSketch(cfg)
    x = rand_vec()
    for _ in range(300):  # counters reach 300 -> 2-byte width
        s.add(x)
    assert len(s.to_bytes()) == HEADER_SIZE + 2 * 2 * 2 + 4


def test_variance_bound_helpers():
    assert ace_variance_bound(3.0) == 9.0
    r = rehashed_variance_bound(0.5, 4)
    expected = (4 / 3) ** 2 * (np.sqrt(3 / 4) * 0.5 + 0.5) ** 2
    assert r == pytest.approx(expected)


def test_kde_estimate_invariant():
    est = KdeEstimate(0.4, np.array([0.2, 0.4, 0.9]), 3)
    assert est.value == np.median(est.group_means)
