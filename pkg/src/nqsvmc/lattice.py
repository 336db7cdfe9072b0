"""Graphs and periodic lattices.

A :class:`Lattice` is a Bravais lattice with an optional basis of site
offsets. Edges are found by binning minimum-image pair distances into shells:
order-1 edges connect nearest neighbors, order-2 edges next-nearest, and so
on. Each unordered pair appears at most once per order.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

__all__ = [
    "Graph",
    "Lattice",
    "chain",
    "hypercube",
    "square",
    "cube",
    "triangular",
    "honeycomb",
]

_BIN_ATOL = 1e-9


class Graph:
    """Undirected graph with neighbor-order tags on its edges."""

    def __init__(self, n_nodes: int, edges, orders=None):
        self._n_nodes = int(n_nodes)
        edge_list = [(int(u), int(v)) for u, v in edges]
        for u, v in edge_list:
            if u == v:
                raise ValueError(f"self loop on node {u}")
            if not (0 <= u < n_nodes and 0 <= v < n_nodes):
                raise ValueError(f"edge ({u}, {v}) out of range")
        if orders is None:
            orders = [1] * len(edge_list)
        self._edges = [
            (min(u, v), max(u, v), int(o)) for (u, v), o in zip(edge_list, orders)
        ]
        seen = set()
        for u, v, o in self._edges:
            if (u, v, o) in seen:
                raise ValueError(f"duplicate edge ({u}, {v}) at order {o}")
            seen.add((u, v, o))

    @property
    def n_nodes(self) -> int:
        return self._n_nodes

    @property
    def n_edges(self) -> int:
        return len(self.edges())

    def edges(self, order: int = 1) -> list[tuple[int, int]]:
        return [(u, v) for u, v, o in self._edges if o == order]

    def edges_with_orders(self) -> list[tuple[int, int, int]]:
        return list(self._edges)

    @property
    def max_order(self) -> int:
        return max((o for _, _, o in self._edges), default=0)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes), dtype=np.int64)
        for u, v in self.edges():
            a[u, v] = a[v, u] = 1
        return a

    def graph_distances(self) -> np.ndarray:
        """All-pairs shortest path lengths over order-1 edges (BFS)."""
        n = self.n_nodes
        adj: list[list[int]] = [[] for _ in range(n)]
        for u, v in self.edges():
            adj[u].append(v)
            adj[v].append(u)
        dist = np.full((n, n), -1, dtype=np.int64)
        for s in range(n):
            dist[s, s] = 0
            frontier = [s]
            d = 0
            while frontier:
                d += 1
                nxt = []
                for u in frontier:
                    for v in adj[u]:
                        if dist[s, v] < 0:
                            dist[s, v] = d
                            nxt.append(v)
                frontier = nxt
        return dist

    def __repr__(self):
        return f"Graph(n_nodes={self.n_nodes}, n_edges={self.n_edges})"


class Lattice(Graph):
    """Bravais lattice with a site basis.

    Parameters
    ----------
    basis_vectors:
        (d, d) array, one primitive vector per row.
    extent:
        Number of unit cells along each primitive direction.
    pbc:
        Periodic flags, a bool or one per direction.
    site_offsets:
        (n_b, d) positions of the sites inside the unit cell. Default: one
        site at the origin.
    max_neighbor_order:
        Highest distance shell to tag edges for.

    Node index = (row-major cell rank) * n_offsets + offset index.
    """

    def __init__(
        self,
        basis_vectors,
        extent,
        *,
        pbc=True,
        site_offsets=None,
        max_neighbor_order: int = 1,
        point_group=None,
    ):
        self.basis_vectors = np.asarray(basis_vectors, dtype=np.float64)
        if self.basis_vectors.ndim != 2 or (
            self.basis_vectors.shape[0] != self.basis_vectors.shape[1]
        ):
            raise ValueError("basis_vectors must be a square (d, d) array")
        self.ndim = self.basis_vectors.shape[0]
        self.extent = tuple(int(e) for e in np.atleast_1d(extent))
        if len(self.extent) != self.ndim:
            raise ValueError("extent length must match the number of dimensions")
        if np.isscalar(pbc) or isinstance(pbc, (bool, np.bool_)):
            self.pbc = tuple(bool(pbc) for _ in range(self.ndim))
        else:
            self.pbc = tuple(bool(b) for b in pbc)
        if len(self.pbc) != self.ndim:
            raise ValueError("pbc length must match the number of dimensions")
        for L, per in zip(self.extent, self.pbc):
            if L < 1:
                raise ValueError("extent entries must be >= 1")
            if per and L < 2:
                raise ValueError("periodic direction needs extent >= 2")
            if per and L < 3 and max_neighbor_order >= 2:
                raise ValueError(
                    "order >= 2 neighbor shells are ambiguous on periodic "
                    "extents < 3"
                )
        if site_offsets is None:
            site_offsets = np.zeros((1, self.ndim))
        self.site_offsets = np.atleast_2d(np.asarray(site_offsets, dtype=np.float64))
        if self.site_offsets.shape[1] != self.ndim:
            raise ValueError("site offsets must have one coordinate per dimension")
        self.n_offsets = self.site_offsets.shape[0]
        self.n_cells = int(np.prod(self.extent))
        self._point_group = point_group

        cells = np.array(
            list(itertools.product(*[range(L) for L in self.extent])),
            dtype=np.int64,
        ).reshape(self.n_cells, self.ndim)
        self._cells = cells
        pos = cells @ self.basis_vectors  # (n_cells, d)
        self.positions = (
            pos[:, None, :] + self.site_offsets[None, :, :]
        ).reshape(-1, self.ndim)

        n_nodes = self.n_cells * self.n_offsets
        edges, orders = self._shell_edges(n_nodes, max_neighbor_order)
        super().__init__(n_nodes, edges, orders)
        self._position_index = self._build_position_index()

    # -- geometry -------------------------------------------------------

    def _superlattice(self) -> np.ndarray:
        return self.basis_vectors * np.asarray(self.extent)[:, None]

    def min_image_deltas(self, delta: np.ndarray) -> np.ndarray:
        """Minimum-image displacement vectors (pbc directions wrapped)."""
        delta = np.asarray(delta, dtype=np.float64)
        T = self._superlattice()
        shifts = []
        ranges = [
            range(-2, 3) if per else range(0, 1) for per in self.pbc
        ]
        for ms in itertools.product(*ranges):
            shifts.append(np.asarray(ms) @ T)
        shifts = np.array(shifts)  # (n_shift, d)
        cand = delta[..., None, :] + shifts  # (..., n_shift, d)
        norms = np.linalg.norm(cand, axis=-1)
        best = np.argmin(norms, axis=-1)
        return np.take_along_axis(cand, best[..., None, None], axis=-2)[..., 0, :]

    def distances(self) -> np.ndarray:
        """(n, n) minimum-image Euclidean distances."""
        delta = self.positions[None, :, :] - self.positions[:, None, :]
        return np.linalg.norm(self.min_image_deltas(delta), axis=-1)

    def _shell_edges(self, n_nodes, max_order):
        if max_order < 1:
            return [], []
        delta = self.positions[None, :, :] - self.positions[:, None, :]
        dist = np.linalg.norm(self.min_image_deltas(delta), axis=-1)
        iu, ju = np.triu_indices(n_nodes, k=1)
        pair_d = dist[iu, ju]
        # cluster the sorted distances by gaps well above float noise
        ds = np.sort(pair_d)
        ds = ds[ds > _BIN_ATOL]
        shells = []
        start = 0
        for i in range(1, len(ds) + 1):
            if i == len(ds) or ds[i] - ds[i - 1] > _BIN_ATOL * (1 + ds[i]):
                shells.append(0.5 * (ds[start] + ds[i - 1]))
                start = i
        edges, orders = [], []
        for k in range(1, min(max_order, len(shells)) + 1):
            r = shells[k - 1]
            mask = np.abs(pair_d - r) < _BIN_ATOL * (1 + r)
            for u, v in zip(iu[mask], ju[mask]):
                edges.append((int(u), int(v)))
                orders.append(k)
        return edges, orders

    def _build_position_index(self):
        index = {}
        for i, r in enumerate(self.positions):
            index[self._position_key(r)] = i
        return index

    def _position_key(self, r) -> tuple:
        frac = np.asarray(r) @ np.linalg.inv(self.basis_vectors)
        for d, per in enumerate(self.pbc):
            if per:
                frac[d] = frac[d] % self.extent[d]
                # wrap values that sit within rounding noise of the boundary
                if frac[d] > self.extent[d] - 1e-6:
                    frac[d] -= self.extent[d]
        cart = frac @ self.basis_vectors
        return tuple(np.round(cart / 1e-6).astype(np.int64))

    def position_to_index(self, r) -> int:
        """Node whose (wrapped) position matches r, else ValueError."""
        try:
            return self._position_index[self._position_key(r)]
        except KeyError:
            raise ValueError(f"no lattice node at position {np.asarray(r)}") from None

    # -- translations and momenta --------------------------------------

    def translation_vectors(self) -> np.ndarray:
        """Integer cell shifts forming the translation group (pbc dims only)."""
        ranges = [range(L) if per else range(1) for L, per in zip(self.extent, self.pbc)]
        return np.array(list(itertools.product(*ranges)), dtype=np.int64)

    def translation_permutation(self, shift) -> np.ndarray:
        """Site permutation p for the cell shift; site i maps to p[i]."""
        shift = np.asarray(shift, dtype=np.int64)
        new_cells = self._cells + shift
        for d, per in enumerate(self.pbc):
            if per:
                new_cells[:, d] %= self.extent[d]
            elif np.any(shift[d] != 0):
                raise ValueError("translation along an open direction")
        cell_rank = np.ravel_multi_index(new_cells.T, self.extent)
        perm = np.empty(self.n_nodes, dtype=np.int64)
        for c in range(self.n_cells):
            for b in range(self.n_offsets):
                perm[c * self.n_offsets + b] = cell_rank[c] * self.n_offsets + b
        return perm

    def reciprocal_basis(self) -> np.ndarray:
        """Rows b_j with a_i . b_j = 2 pi delta_ij."""
        return 2 * math.pi * np.linalg.inv(self.basis_vectors).T

    def momentum(self, n) -> np.ndarray:
        """Wave vector sum_d n_d b_d / extent_d for integer n."""
        n = np.atleast_1d(np.asarray(n, dtype=np.float64))
        if n.size != self.ndim:
            raise ValueError("need one momentum index per dimension")
        return (n / np.asarray(self.extent)) @ self.reciprocal_basis()

    def default_point_group(self):
        if self._point_group is None:
            raise ValueError(
                "this lattice has no default point group; pass one explicitly"
            )
        return self._point_group

    def __repr__(self):
        return (
            f"Lattice(extent={self.extent}, n_nodes={self.n_nodes}, "
            f"pbc={self.pbc})"
        )


def chain(length: int, *, pbc=True, max_neighbor_order: int = 1) -> Lattice:
    """1D chain with unit spacing."""
    from . import symmetry

    return Lattice(
        [[1.0]],
        (length,),
        pbc=pbc,
        max_neighbor_order=max_neighbor_order,
        point_group=symmetry.inversion_group(1),
    )


def hypercube(length: int, n_dim: int, *, pbc=True, max_neighbor_order: int = 1) -> Lattice:
    """n_dim-dimensional simple cubic lattice with unit spacing."""
    from . import symmetry

    return Lattice(
        np.eye(n_dim),
        (length,) * n_dim,
        pbc=pbc,
        max_neighbor_order=max_neighbor_order,
        point_group=symmetry.hyperoctahedral(n_dim),
    )


def square(length: int, *, pbc=True, max_neighbor_order: int = 1) -> Lattice:
    return hypercube(length, 2, pbc=pbc, max_neighbor_order=max_neighbor_order)


def cube(length: int, *, pbc=True, max_neighbor_order: int = 1) -> Lattice:
    return hypercube(length, 3, pbc=pbc, max_neighbor_order=max_neighbor_order)


def triangular(extent, *, pbc=True, max_neighbor_order: int = 1) -> Lattice:
    """Triangular lattice, nearest-neighbor distance 1. A lattice site sits
    at the origin and carries the full D6 point symmetry."""
    from . import symmetry

    extent = tuple(np.atleast_1d(extent)) if not np.isscalar(extent) else (extent, extent)
    if len(extent) == 1:
        extent = (int(extent[0]), int(extent[0]))
    basis = [[1.0, 0.0], [0.5, math.sqrt(3) / 2]]
    return Lattice(
        basis,
        extent,
        pbc=pbc,
        max_neighbor_order=max_neighbor_order,
        point_group=symmetry.dihedral(6),
    )


def honeycomb(extent, *, pbc=True, max_neighbor_order: int = 1) -> Lattice:
    """Honeycomb lattice, nearest-neighbor distance 1. The origin sits at a
    hexagon center so the full D6 point group acts on the site set."""
    from . import symmetry

    extent = tuple(np.atleast_1d(extent)) if not np.isscalar(extent) else (extent, extent)
    if len(extent) == 1:
        extent = (int(extent[0]), int(extent[0]))
    basis = [[1.5, math.sqrt(3) / 2], [1.5, -math.sqrt(3) / 2]]
    offsets = [[-0.5, -math.sqrt(3) / 2], [0.5, -math.sqrt(3) / 2]]
    return Lattice(
        basis,
        extent,
        pbc=pbc,
        site_offsets=offsets,
        max_neighbor_order=max_neighbor_order,
        point_group=symmetry.dihedral(6),
    )
