"""Finite symmetry groups: permutations, point groups, space groups and
their character tables.

Permutation convention: an element with permutation array p moves the value
at site i to site p[i], so acting on a configuration s gives
``(g.s)[p[i]] = s[i]``. Composition is function application,
``p_(g o h) = p_g[p_h]``, and ``(g o h).s = g.(h.s)``.

Character tables are computed with the Burnside class-sum method: the class
sums of a finite group commute, and their simultaneous eigenvectors are the
central characters, from which the irreducible characters follow. Eigenvalue
degeneracies are broken deterministically by refining against successive
class-sum matrices; rows are sorted by (dimension, lexicographic order).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "perm_compose",
    "perm_inverse",
    "act_on_configs",
    "FiniteGroup",
    "PermutationGroup",
    "CharacterTable",
    "PointGroupElement",
    "PointGroup",
    "identity_group",
    "inversion_group",
    "cyclic",
    "dihedral",
    "hyperoctahedral",
    "SpaceGroup",
    "space_group",
    "translation_group",
]

GROUP_ORDER_CAP = 1024


# -- permutations -------------------------------------------------------


def perm_compose(pg: np.ndarray, ph: np.ndarray) -> np.ndarray:
    """Permutation of (g o h): first h, then g."""
    return np.asarray(pg)[np.asarray(ph)]


def perm_inverse(p: np.ndarray) -> np.ndarray:
    return np.argsort(np.asarray(p))


def act_on_configs(p: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Apply a site permutation to a batch of configurations.

    out[..., p[i]] = states[..., i].
    """
    states = np.asarray(states)
    out = np.empty_like(states)
    out[..., np.asarray(p)] = states
    return out


# -- abstract finite groups --------------------------------------------


class FiniteGroup:
    """Finite group realized by its product table.

    ``table[g, h]`` is the index of g o h; element 0 is the identity.
    """

    def __init__(self, table: np.ndarray, names: list[str] | None = None):
        self.table = np.asarray(table, dtype=np.int64)
        n = self.table.shape[0]
        if self.table.shape != (n, n):
            raise ValueError("product table must be square")
        if n > GROUP_ORDER_CAP:
            raise ValueError(f"group order {n} exceeds cap {GROUP_ORDER_CAP}")
        if not (
            np.array_equal(self.table[0], np.arange(n))
            and np.array_equal(self.table[:, 0], np.arange(n))
        ):
            raise ValueError("element 0 must be the identity")
        self.names = names if names is not None else [f"g{i}" for i in range(n)]
        inv = np.full(n, -1, dtype=np.int64)
        for g in range(n):
            hits = np.where(self.table[g] == 0)[0]
            if hits.size != 1:
                raise ValueError(f"element {self.names[g]} has no unique inverse")
            inv[g] = hits[0]
        self.inverses = inv
        self._classes: list[np.ndarray] | None = None
        self._chartab: "CharacterTable" | None = None

    def __len__(self) -> int:
        return self.table.shape[0]

    def conjugacy_classes(self) -> list[np.ndarray]:
        """Classes ordered by smallest member; the identity class first."""
        if self._classes is None:
            n = len(self)
            assigned = np.full(n, -1, dtype=np.int64)
            classes = []
            for g in range(n):
                if assigned[g] >= 0:
                    continue
                orbit = np.unique(
                    [self.table[self.table[x, g], self.inverses[x]] for x in range(n)]
                )
                for e in orbit:
                    assigned[e] = len(classes)
                classes.append(orbit)
            self._classes = classes
        return self._classes

    def class_of(self) -> np.ndarray:
        classes = self.conjugacy_classes()
        out = np.empty(len(self), dtype=np.int64)
        for c, members in enumerate(classes):
            out[members] = c
        return out

    def character_table(self) -> "CharacterTable":
        if self._chartab is None:
            self._chartab = CharacterTable(self)
        return self._chartab


class PermutationGroup(FiniteGroup):
    """Group of site permutations with an explicit product table."""

    def __init__(self, perms, names: list[str] | None = None):
        perms = np.asarray(perms, dtype=np.int64)
        if perms.ndim != 2:
            raise ValueError("perms must be a (|G|, n_sites) array")
        n, n_sites = perms.shape
        if n > GROUP_ORDER_CAP:
            raise ValueError(f"group order {n} exceeds cap {GROUP_ORDER_CAP}")
        if not np.array_equal(perms[0], np.arange(n_sites)):
            raise ValueError("element 0 must be the identity permutation")
        index = {p.tobytes(): i for i, p in enumerate(perms)}
        if len(index) != n:
            raise ValueError("duplicate permutation in group")
        if names is None:
            names = [f"g{i}" for i in range(n)]
        table = np.empty((n, n), dtype=np.int64)
        for g in range(n):
            composed = perms[g][perms]  # (n, n_sites)
            for h in range(n):
                idx = index.get(composed[h].tobytes())
                if idx is None:
                    raise ValueError(
                        f"not closed: {names[g]} o {names[h]} is missing"
                    )
                table[g, h] = idx
        self.perms = perms
        self.n_sites = n_sites
        super().__init__(table, names)

    def apply(self, g: int, states: np.ndarray) -> np.ndarray:
        return act_on_configs(self.perms[g], states)

    def apply_all(self, states: np.ndarray) -> np.ndarray:
        """Stack of g.states for every g, shape (|G|,) + states.shape."""
        states = np.asarray(states)
        out = np.empty((len(self),) + states.shape, dtype=states.dtype)
        for g in range(len(self)):
            out[g] = act_on_configs(self.perms[g], states)
        return out

    def __repr__(self):
        return f"PermutationGroup(order={len(self)}, n_sites={self.n_sites})"


# -- character tables ---------------------------------------------------


def _snap_display(x: complex) -> complex:
    def snap(v: float) -> float:
        fr = Fraction(v).limit_denominator(12)
        if abs(float(fr) - v) < 1e-8:
            return float(fr)
        return v

    return complex(snap(x.real), snap(x.imag))


class CharacterTable:
    """Irreducible characters of a finite group, one row per irrep."""

    def __init__(self, group: FiniteGroup):
        self.group = group
        self.classes = group.conjugacy_classes()
        self.class_sizes = np.array([len(c) for c in self.classes])
        self.class_reps = np.array([c[0] for c in self.classes])
        self.characters = self._burnside()
        self.n_irreps = self.characters.shape[0]

    # class-sum structure constants and their simultaneous eigenvectors
    def _class_matrices(self) -> np.ndarray:
        group = self.group
        classes = self.classes
        r = len(classes)
        class_of = group.class_of()
        is_rep = np.zeros(len(group), dtype=bool)
        is_rep[self.class_reps] = True
        mats = np.zeros((r, r, r))
        ycls = class_of  # class of column element h
        for j, Cj in enumerate(classes):
            prod = group.table[Cj]  # (|Cj|, |G|)
            hit = is_rep[prod]
            zc = class_of[prod]
            yb = np.broadcast_to(ycls, prod.shape)
            np.add.at(mats[j], (yb[hit], zc[hit]), 1.0)
        return mats

    def _burnside(self) -> np.ndarray:
        mats = self._class_matrices()
        r = mats.shape[0]
        # refine common invariant subspaces against successive class sums
        blocks = [np.eye(r, dtype=complex)]
        for M in mats:
            done = all(b.shape[1] == 1 for b in blocks)
            if done:
                break
            refined = []
            for B in blocks:
                if B.shape[1] == 1:
                    refined.append(B)
                    continue
                A = B.conj().T @ (M @ B)
                w, V = np.linalg.eig(A)
                order = np.argsort(
                    np.round(w.real, 6) + 1j * np.round(w.imag, 6)
                )
                w, V = w[order], V[:, order]
                start = 0
                for i in range(1, len(w) + 1):
                    if i == len(w) or abs(w[i] - w[start]) > 1e-6 * (
                        1 + abs(w[start])
                    ):
                        sub = B @ V[:, start:i]
                        q, _ = np.linalg.qr(sub)
                        refined.append(q)
                        start = i
            blocks = refined
        if not all(b.shape[1] == 1 for b in blocks):
            raise RuntimeError("could not split all central characters")
        order_g = len(self.group)
        rows = []
        for B in blocks:
            v = B[:, 0]
            v = v / v[0]  # identity class entry of the central character is 1
            dim2 = order_g / np.sum(np.abs(v) ** 2 / self.class_sizes)
            d = math.sqrt(dim2.real)
            chi = d * v / self.class_sizes
            # clean rounding noise at the identity: chi(e) = dim exactly
            rows.append(chi)
        chars = np.array(rows)
        dims = np.round(chars[:, 0].real).astype(int)
        keys = []
        for i in range(chars.shape[0]):
            row = np.round(chars[i], 8)
            keys.append((dims[i], tuple(zip(-row.real, -row.imag))))
        order = sorted(range(chars.shape[0]), key=lambda i: keys[i])
        return chars[order]

    # -- checks and access ---------------------------------------------

    def orthogonality_defect(self) -> float:
        """Max deviation of the row orthogonality relations from identity."""
        w = self.class_sizes / len(self.group)
        gram = (self.characters * w) @ self.characters.conj().T
        return float(np.max(np.abs(gram - np.eye(self.n_irreps))))

    def characters_by_element(self, irrep: int) -> np.ndarray:
        """Character of one irrep expanded to a vector over group elements."""
        class_of = self.group.class_of()
        return self.characters[irrep][class_of]

    def class_names(self) -> list[str]:
        return [
            f"{len(c)}x{self.group.names[c[0]]}"
            for c in self.classes
        ]

    def readable(self) -> str:
        snapped = np.array(
            [[_snap_display(x) for x in row] for row in self.characters]
        )
        if np.allclose(snapped.imag, 0):
            snapped = snapped.real
        arr = np.array2string(
            snapped, precision=3, suppress_small=True, separator=", "
        )
        return f"({self.class_names()!r},\n {arr})"


# -- point groups -------------------------------------------------------


@dataclass(frozen=True)
class PointGroupElement:
    """Orthogonal map x -> W x + w with a display name."""

    matrix: tuple
    translation: tuple = ()
    name: str = ""

    @staticmethod
    def from_arrays(W, w=None, name: str | None = None) -> "PointGroupElement":
        W = np.asarray(W, dtype=np.float64)
        d = W.shape[0]
        if w is None:
            w = np.zeros(d)
        w = np.asarray(w, dtype=np.float64)
        if name is None:
            name = _name_point_op(W)
        return PointGroupElement(
            tuple(map(tuple, np.round(W, 12) + 0.0)),
            tuple(np.round(w, 12) + 0.0),
            name,
        )

    @property
    def W(self) -> np.ndarray:
        return np.asarray(self.matrix)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.translation)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.W.T + self.w

    def __mul__(self, other: "PointGroupElement") -> "PointGroupElement":
        W = self.W @ other.W
        w = self.W @ other.w + self.w
        return PointGroupElement.from_arrays(W, w)

    def key(self) -> bytes:
        vals = np.round(np.concatenate([self.W.ravel(), self.w]), 9) + 0.0
        return vals.tobytes()


def _norm_angle(deg: float, period: float) -> float:
    out = deg % period
    if out > period / 2 + 1e-9:
        out -= period
    return out


def _name_point_op(W: np.ndarray) -> str:
    d = W.shape[0]
    if np.allclose(W, np.eye(d)):
        return "Id()"
    if d == 1:
        return "Inv()"
    if d == 2:
        det = np.linalg.det(W)
        if det > 0:
            ang = math.degrees(math.atan2(W[1, 0], W[0, 0]))
            return f"Rot({round(_norm_angle(ang, 360))})"
        ang = math.degrees(math.atan2(W[1, 0], W[0, 0])) / 2
        return f"Refl({round(_norm_angle(ang, 180))})"
    if np.allclose(W, -np.eye(d)):
        return "Inv()"
    return f"PointOp(det={np.linalg.det(W):+.0f})"


class PointGroup(FiniteGroup):
    """Finite group of orthogonal maps; identity first."""

    def __init__(self, elements: list[PointGroupElement]):
        self.elements = list(elements)
        n = len(self.elements)
        if n > GROUP_ORDER_CAP:
            raise ValueError(f"group order {n} exceeds cap {GROUP_ORDER_CAP}")
        d = self.elements[0].W.shape[0]
        if not np.allclose(self.elements[0].W, np.eye(d)) or not np.allclose(
            self.elements[0].w, 0
        ):
            raise ValueError("element 0 must be the identity")
        index = {e.key(): i for i, e in enumerate(self.elements)}
        if len(index) != n:
            raise ValueError("duplicate point-group element")
        table = np.empty((n, n), dtype=np.int64)
        for g in range(n):
            for h in range(n):
                prod = self.elements[g] * self.elements[h]
                idx = index.get(prod.key())
                if idx is None:
                    raise ValueError(
                        f"not closed: {self.elements[g].name} o "
                        f"{self.elements[h].name} is missing"
                    )
                table[g, h] = idx
        self.ndim = d
        self._index = index
        super().__init__(table, [e.name for e in self.elements])

    def element_index(self, e: PointGroupElement) -> int:
        idx = self._index.get(e.key())
        if idx is None:
            raise ValueError(f"{e.name} is not in the group")
        return idx

    def is_symmorphic(self) -> bool:
        return all(np.allclose(e.w, 0) for e in self.elements)

    def __repr__(self):
        return f"PointGroup(order={len(self)}, ndim={self.ndim})"


def identity_group(d: int) -> PointGroup:
    return PointGroup([PointGroupElement.from_arrays(np.eye(d))])


def inversion_group(d: int) -> PointGroup:
    return PointGroup(
        [
            PointGroupElement.from_arrays(np.eye(d)),
            PointGroupElement.from_arrays(-np.eye(d)),
        ]
    )


def _rotation(deg: float) -> np.ndarray:
    t = math.radians(deg)
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


def _reflection(deg: float) -> np.ndarray:
    t = math.radians(2 * deg)
    return np.array([[math.cos(t), math.sin(t)], [math.sin(t), -math.cos(t)]])


def cyclic(n: int) -> PointGroup:
    """Planar rotations by multiples of 360/n degrees."""
    return PointGroup(
        [
            PointGroupElement.from_arrays(_rotation(k * 360.0 / n))
            for k in range(n)
        ]
    )


def dihedral(n: int) -> PointGroup:
    """Planar rotations by 360/n plus reflections with axes at k*180/n."""
    els = [
        PointGroupElement.from_arrays(_rotation(k * 360.0 / n)) for k in range(n)
    ]
    els += [
        PointGroupElement.from_arrays(_reflection(k * 180.0 / n))
        for k in range(n)
    ]
    return PointGroup(els)


def hyperoctahedral(d: int) -> PointGroup:
    """Symmetries of the d-cube: signed permutation matrices."""
    mats = []
    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1, -1), repeat=d):
            W = np.zeros((d, d))
            for i, (p, s) in enumerate(zip(perm, signs)):
                W[p, i] = s
            mats.append(W)
    # identity first, rest in generated order
    mats.sort(key=lambda W: 0 if np.allclose(W, np.eye(d)) else 1)
    return PointGroup([PointGroupElement.from_arrays(W) for W in mats])


# -- space groups -------------------------------------------------------


class SpaceGroup(PermutationGroup):
    """Semidirect product of lattice translations and a point group,
    realized as site permutations.

    Elements are ordered point-op major: g = t o p (apply the point op,
    then translate), with translations iterating fastest.
    """

    def __init__(self, lattice, point_group: PointGroup):
        self.lattice = lattice
        self.point_group = point_group
        shifts = lattice.translation_vectors()
        point_perms = []
        for e in point_group.elements:
            perm = np.empty(lattice.n_nodes, dtype=np.int64)
            for i, r in enumerate(lattice.positions):
                perm[i] = lattice.position_to_index(e.apply(r))
            if len(set(perm.tolist())) != lattice.n_nodes:
                raise ValueError(f"{e.name} does not permute the lattice sites")
            point_perms.append(perm)
        trans_perms = [lattice.translation_permutation(s) for s in shifts]
        perms, names = [], []
        el_point, el_shift = [], []
        for p_idx, (p_perm, e) in enumerate(zip(point_perms, point_group.elements)):
            for t_idx, (t_perm, s) in enumerate(zip(trans_perms, shifts)):
                perms.append(perm_compose(t_perm, p_perm))
                tag = f"T{tuple(int(x) for x in s)}" if np.any(s != 0) else ""
                names.append(f"{tag}{e.name}" if tag else e.name)
                el_point.append(p_idx)
                el_shift.append(s)
        self.element_point = np.array(el_point, dtype=np.int64)
        self.element_shift = np.array(el_shift, dtype=np.int64)
        super().__init__(np.array(perms), names)

    # -- momentum machinery --------------------------------------------

    def _frac_momentum(self, k: np.ndarray) -> np.ndarray:
        return np.asarray(k) @ np.linalg.inv(self.lattice.reciprocal_basis())

    def _same_momentum(self, k1, k2) -> bool:
        d = self._frac_momentum(k1) - self._frac_momentum(k2)
        return bool(np.allclose(d - np.round(d), 0, atol=1e-9))

    def _check_momentum(self, k) -> np.ndarray:
        k = np.atleast_1d(np.asarray(k, dtype=np.float64))
        frac = self._frac_momentum(k) * np.asarray(self.lattice.extent)
        if not np.allclose(frac - np.round(frac), 0, atol=1e-7):
            raise ValueError(
                f"momentum {k} is not a reciprocal vector of this lattice"
            )
        if not self.point_group.is_symmorphic():
            kf = self._frac_momentum(k)
            on_boundary = np.any(
                np.isclose(np.abs(kf - np.round(kf)), 0.5, atol=1e-9)
            )
            if on_boundary:
                raise NotImplementedError(
                    "zone-boundary momenta of nonsymmorphic groups are not "
                    "supported"
                )
        return k

    def star(self, k) -> tuple[np.ndarray, list[int]]:
        """Distinct images of k under the point group and the first point op
        reaching each."""
        k = self._check_momentum(k)
        members, reps = [], []
        for i, e in enumerate(self.point_group.elements):
            ki = e.W @ k
            if not any(self._same_momentum(ki, m) for m in members):
                members.append(ki)
                reps.append(i)
        return np.array(members), reps

    def little_group(self, k) -> PointGroup:
        """Point ops whose action fixes k modulo the reciprocal lattice."""
        k = self._check_momentum(k)
        kept = [
            e
            for e in self.point_group.elements
            if self._same_momentum(e.W @ k, k)
        ]
        return PointGroup(kept)

    def irrep_characters(self, k, irrep: int) -> np.ndarray:
        """Character vector over all group elements for the space-group irrep
        induced from the given little-group irrep at momentum k.

        chi(t o p) = sum over star members k_j fixed by p of
        exp(-i k_j . tau_t) * chi_little(x_j^-1 p x_j).
        """
        k = self._check_momentum(k)
        little = self.little_group(k)
        table = little.character_table()
        if not 0 <= irrep < table.n_irreps:
            raise ValueError(
                f"irrep index {irrep} out of range ({table.n_irreps} irreps)"
            )
        class_of = little.class_of()
        chi_little = table.characters[irrep]
        star_k, star_reps = self.star(k)
        xs = [self.point_group.elements[i] for i in star_reps]
        basis = self.lattice.basis_vectors
        out = np.zeros(len(self), dtype=np.complex128)
        for g in range(len(self)):
            p = self.point_group.elements[self.element_point[g]]
            tau = self.element_shift[g] @ basis
            val = 0.0 + 0.0j
            for kj, xj in zip(star_k, xs):
                if not self._same_momentum(p.W @ kj, kj):
                    continue
                conj = PointGroupElement.from_arrays(
                    np.linalg.inv(xj.W) @ p.W @ xj.W
                )
                idx = little.element_index(conj)
                val += np.exp(-1j * kj @ tau) * chi_little[class_of[idx]]
            out[g] = val
        return out


def space_group(lattice, point_group: PointGroup | None = None) -> SpaceGroup:
    """Space group of a lattice; uses the lattice's default point group when
    none is given."""
    if point_group is None:
        point_group = lattice.default_point_group()
    return SpaceGroup(lattice, point_group)


def translation_group(lattice) -> SpaceGroup:
    """Pure translation group of a lattice."""
    return SpaceGroup(lattice, identity_group(lattice.ndim))
