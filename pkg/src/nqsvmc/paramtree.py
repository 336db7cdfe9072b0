"""Nested-dict parameter containers and their flattened vector form.

Parameters are nested dicts of numpy arrays. Flattening walks leaves in
lexicographic path order and ravels each leaf C-style, so the mapping between
a tree and its vector is deterministic and documented: two trees with the
same structure always flatten compatibly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TreeSpec",
    "flatten",
    "unflatten",
    "flatten_batch",
    "tree_map",
    "tree_leaves",
    "zeros_like",
    "axpy",
    "vdot",
    "norm",
    "n_params",
]


def tree_leaves(tree, prefix=()) -> list[tuple[tuple[str, ...], np.ndarray]]:
    """(path, leaf) pairs in lexicographic path order."""
    if isinstance(tree, dict):
        out = []
        for key in sorted(tree):
            out.extend(tree_leaves(tree[key], prefix + (key,)))
        return out
    return [(prefix, np.asarray(tree))]


@dataclass(frozen=True)
class TreeSpec:
    """Shapes and dtypes of the leaves, in flattening order."""

    entries: tuple[tuple[tuple[str, ...], tuple[int, ...], np.dtype], ...]

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape, _ in self.entries)

    @property
    def is_complex(self) -> bool:
        return any(np.issubdtype(dt, np.complexfloating) for _, _, dt in self.entries)

    @property
    def vector_dtype(self) -> np.dtype:
        return np.dtype(np.complex128 if self.is_complex else np.float64)


def spec_of(tree) -> TreeSpec:
    return TreeSpec(
        tuple((path, leaf.shape, leaf.dtype) for path, leaf in tree_leaves(tree))
    )


def flatten(tree) -> tuple[np.ndarray, TreeSpec]:
    """Flatten to a single vector; complex if any leaf is complex."""
    leaves = tree_leaves(tree)
    spec = TreeSpec(tuple((p, l.shape, l.dtype) for p, l in leaves))
    if not leaves:
        return np.zeros(0), spec
    vec = np.concatenate([l.ravel().astype(spec.vector_dtype) for _, l in leaves])
    return vec, spec


def unflatten(spec: TreeSpec, vec: np.ndarray):
    """Rebuild the nested dict; real leaves take the real part."""
    vec = np.asarray(vec)
    if vec.size != spec.n_params:
        raise ValueError(f"vector length {vec.size} != n_params {spec.n_params}")
    tree: dict = {}
    pos = 0
    for path, shape, dtype in spec.entries:
        size = int(np.prod(shape))
        chunk = vec[pos : pos + size].reshape(shape)
        if not np.issubdtype(dtype, np.complexfloating):
            chunk = chunk.real
        node = tree
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = chunk.astype(dtype)
        pos += size
    return tree


def flatten_batch(tree, batch: int) -> np.ndarray:
    """Flatten a tree whose leaves carry a leading batch axis to (batch, P)."""
    leaves = tree_leaves(tree)
    cols = []
    complex_any = any(np.issubdtype(l.dtype, np.complexfloating) for _, l in leaves)
    dt = np.complex128 if complex_any else np.float64
    for _, leaf in leaves:
        if leaf.shape[0] != batch:
            raise ValueError(
                f"leaf batch {leaf.shape[0]} != expected batch {batch}"
            )
        cols.append(leaf.reshape(batch, -1).astype(dt))
    return np.concatenate(cols, axis=1) if cols else np.zeros((batch, 0), dt)


def tree_map(fn, tree, *rest):
    if isinstance(tree, dict):
        return {k: tree_map(fn, tree[k], *[r[k] for r in rest]) for k in tree}
    return fn(tree, *rest)


def zeros_like(tree):
    return tree_map(np.zeros_like, tree)


def axpy(alpha, x, y):
    """y + alpha * x, leafwise."""
    return tree_map(lambda xl, yl: yl + alpha * xl, x, y)


def vdot(a, b) -> complex:
    """sum over leaves of <a, b> with a conjugated."""
    total = 0.0 + 0.0j
    for (_, la), (_, lb) in zip(tree_leaves(a), tree_leaves(b)):
        total += np.vdot(la, lb)
    return complex(total)


def norm(tree) -> float:
    return float(np.sqrt(abs(vdot(tree, tree))))


def n_params(tree) -> int:
    return sum(l.size for _, l in tree_leaves(tree))
