import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nqsvmc import paramtree


def tree_strategy():
    leaf = st.tuples(
        st.sampled_from([np.float64, np.complex128]),
        st.lists(st.integers(1, 3), min_size=0, max_size=3),
    )
    names = st.text(alphabet="abcWT", min_size=1, max_size=3)
    return st.recursive(
        leaf,
        lambda sub: st.dictionaries(names, sub, min_size=1, max_size=3),
        max_leaves=6,
    )


def materialize(spec, rng):
    if isinstance(spec, dict):
        return {k: materialize(v, rng) for k, v in spec.items()}
    dtype, shape = spec
    x = rng.standard_normal(tuple(shape))
    if dtype == np.complex128:
        x = x + 1j * rng.standard_normal(tuple(shape))
    return x.astype(dtype)


@settings(max_examples=50, deadline=None)
@given(tree_strategy(), st.integers(0, 2**31))
def test_flatten_roundtrip(spec, seed):
    tree = materialize(spec, np.random.default_rng(seed))
    if not isinstance(tree, dict):
        tree = {"x": tree}
    vec, tspec = paramtree.flatten(tree)
    back = paramtree.unflatten(tspec, vec)
    for (pa, la), (pb, lb) in zip(
        paramtree.tree_leaves(tree), paramtree.tree_leaves(back)
    ):
        assert pa == pb
        assert la.dtype == lb.dtype
        assert np.array_equal(la, lb)


def test_flatten_order_is_lexicographic():
    tree = {"b": np.array([3.0]), "a": {"z": np.array([2.0]), "a": np.array([1.0])}}
    vec, spec = paramtree.flatten(tree)
    assert np.array_equal(vec, [1.0, 2.0, 3.0])
    assert [p for p, _, _ in spec.entries] == [("a", "a"), ("a", "z"), ("b",)]


def test_flatten_batch_matches_per_row_flatten():
    rng = np.random.default_rng(0)
    batched = {"W": rng.standard_normal((4, 2, 3)), "a": rng.standard_normal((4, 5))}
    mat = paramtree.flatten_batch(batched, 4)
    assert mat.shape == (4, 11)
    for b in range(4):
        row, _ = paramtree.flatten({"W": batched["W"][b], "a": batched["a"][b]})
        assert np.allclose(mat[b], row)


def test_unflatten_length_mismatch():
    _, spec = paramtree.flatten({"a": np.zeros(3)})
    with pytest.raises(ValueError):
        paramtree.unflatten(spec, np.zeros(4))


def test_vdot_conjugates_left():
    a = {"x": np.array([1.0 + 2.0j])}
    b = {"x": np.array([3.0 - 1.0j])}
    assert paramtree.vdot(a, b) == pytest.approx((1 - 2j) * (3 - 1j))


def test_mixed_dtype_vector_is_complex():
    vec, spec = paramtree.flatten({"r": np.ones(2), "c": np.ones(2) * 1j})
    assert vec.dtype == np.complex128
    assert spec.is_complex
