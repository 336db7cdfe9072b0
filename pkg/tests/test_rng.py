import numpy as np
import pytest

from nqsvmc.rng import RngKey, as_key


def test_same_seed_same_stream():
    a = RngKey(7).generator().standard_normal(5)
    b = RngKey(7).generator().standard_normal(5)
    assert np.array_equal(a, b)


def test_split_streams_differ():
    k1, k2 = RngKey(0).split(2)
    x1 = k1.generator().standard_normal(100)
    x2 = k2.generator().standard_normal(100)
    assert not np.allclose(x1, x2)


def test_child_is_deterministic():
    key = RngKey(3)
    a = key.child(5).generator().integers(0, 1 << 30, 10)
    b = RngKey(3).child(5).generator().integers(0, 1 << 30, 10)
    assert np.array_equal(a, b)


def test_children_independent_of_sibling_count():
    # child(i) must not depend on how many siblings were spawned
    key = RngKey(11)
    first = key.split(2)[0].generator().standard_normal(4)
    again = RngKey(11).split(8)[0].generator().standard_normal(4)
    assert np.array_equal(first, again)


def test_as_key_passthrough_and_int():
    key = RngKey(1)
    assert as_key(key) is key
    assert isinstance(as_key(42), RngKey)


def test_split_validates():
    with pytest.raises(ValueError):
        RngKey(0).split(0)
