"""Operators on discrete and continuous spaces.

Discrete operators expose ``get_conn(s) -> (states, elements)``: the
configurations s' connected to s together with the matrix elements <s|O|s'>.
The first row is always s itself carrying the diagonal element (possibly
zero). Elements with magnitude <= 1e-14 are pruned. Dense matrices are the
row-wise assembly of get_conn over the basis.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse

from .hilbert import DiscreteHilbert, Particle

__all__ = [
    "LocalOperator",
    "PauliStrings",
    "FermionOperator2nd",
    "jordan_wigner",
    "KineticEnergy",
    "PotentialEnergy",
    "ContinuousSum",
    "sigmax",
    "sigmay",
    "sigmaz",
    "sigmap",
    "sigmam",
    "ising",
    "heisenberg",
    "local_values",
    "DENSE_CAP",
]

PRUNE_TOL = 1e-14
DENSE_CAP = 2**14


class DiscreteOperator:
    """Base class: anything with get_conn on a DiscreteHilbert."""

    def __init__(self, hilbert: DiscreteHilbert):
        if not isinstance(hilbert, DiscreteHilbert):
            raise TypeError("DiscreteOperator needs a DiscreteHilbert")
        self.hilbert = hilbert

    def get_conn(self, s: np.ndarray):
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        n = self.hilbert.n_states
        if n > DENSE_CAP:
            raise RuntimeError(f"dense matrix of {n} states exceeds cap {DENSE_CAP}")
        basis = self.hilbert.all_states()
        mat = np.zeros((n, n), dtype=np.complex128)
        for i in range(n):
            conns, mels = self.get_conn(basis[i])
            cols = self.hilbert.states_to_numbers(conns)
            np.add.at(mat, (np.full(cols.shape, i), cols), mels)
        return mat

    def to_sparse(self) -> scipy.sparse.csr_matrix:
        n = self.hilbert.n_states
        basis = self.hilbert.all_states()
        rows, cols, vals = [], [], []
        for i in range(n):
            conns, mels = self.get_conn(basis[i])
            j = self.hilbert.states_to_numbers(conns)
            rows.extend([i] * len(j))
            cols.extend(j.tolist())
            vals.extend(mels.tolist())
        return scipy.sparse.csr_matrix(
            (vals, (rows, cols)), shape=(n, n), dtype=np.complex128
        )


# -- K-local dense-block operators --------------------------------------


def _sorted_block(mat: np.ndarray, sites: tuple[int, ...], dims: dict[int, int]):
    """Permute a block given on `sites` (any order) to ascending site order."""
    order = np.argsort(sites)
    if np.array_equal(order, np.arange(len(sites))):
        return mat, tuple(sites)
    d = [dims[s] for s in sites]
    k = len(sites)
    T = mat.reshape(d + d)
    axes = list(order) + [k + o for o in order]
    T = np.transpose(T, axes)
    new_sites = tuple(sorted(sites))
    size = int(np.prod([dims[s] for s in new_sites]))
    return T.reshape(size, size), new_sites


class LocalOperator(DiscreteOperator):
    """Sum of dense blocks, each acting on a small set of sites.

    Parameters
    ----------
    hilbert:
        Underlying space.
    operators, acting_on:
        A matrix (or list of matrices) with the site tuple(s) it acts on.
        The block dimension must equal the product of the local dimensions
        of its sites; blocks on the same site set are summed.
    constant:
        Scalar multiple of the identity added to the sum.
    """

    def __init__(self, hilbert, operators=None, acting_on=None, constant=0.0):
        super().__init__(hilbert)
        self._dims = {i: len(hilbert.local_states[i]) for i in range(hilbert.size)}
        self._terms: dict[tuple[int, ...], np.ndarray] = {}
        self.constant = complex(constant)
        if operators is not None:
            if acting_on is None:
                raise ValueError("acting_on required with operators")
            if isinstance(acting_on[0], (int, np.integer)):
                operators = [operators]
                acting_on = [acting_on]
            for mat, sites in zip(operators, acting_on):
                self._add_term(np.asarray(mat, dtype=np.complex128), tuple(int(x) for x in sites))
        self._digit_maps = [
            {v: d for d, v in enumerate(hilbert.local_states[i])}
            for i in range(hilbert.size)
        ]

    def _add_term(self, mat: np.ndarray, sites: tuple[int, ...]):
        if len(set(sites)) != len(sites):
            raise ValueError(f"acting_on {sites} lists a site twice")
        for s in sites:
            if not 0 <= s < self.hilbert.size:
                raise ValueError(f"site {s} out of range")
        size = int(np.prod([self._dims[s] for s in sites]))
        if mat.shape != (size, size):
            raise ValueError(
                f"block on {sites} must be {size}x{size}, got {mat.shape}"
            )
        mat, sites = _sorted_block(mat, sites, self._dims)
        if sites in self._terms:
            self._terms[sites] = self._terms[sites] + mat
        else:
            self._terms[sites] = mat.astype(np.complex128)

    @property
    def acting_on(self) -> list[tuple[int, ...]]:
        return sorted(self._terms)

    def block(self, sites: tuple[int, ...]) -> np.ndarray:
        return self._terms[tuple(sites)].copy()

    # -- algebra --------------------------------------------------------

    def copy(self) -> "LocalOperator":
        out = LocalOperator(self.hilbert, constant=self.constant)
        out._terms = {k: v.copy() for k, v in self._terms.items()}
        return out

    def __add__(self, other):
        if np.isscalar(other):
            out = self.copy()
            out.constant += complex(other)
            return out
        if isinstance(other, LocalOperator):
            if other.hilbert != self.hilbert:
                raise ValueError("operators act on different spaces")
            out = self.copy()
            out.constant += other.constant
            for sites, mat in other._terms.items():
                out._add_term(mat, sites)
            return out
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        out = self.copy()
        out.constant *= scalar
        out._terms = {k: scalar * v for k, v in out._terms.items()}
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def __matmul__(self, other: "LocalOperator") -> "LocalOperator":
        if not isinstance(other, LocalOperator):
            return NotImplemented
        if other.hilbert != self.hilbert:
            raise ValueError("operators act on different spaces")
        out = LocalOperator(self.hilbert, constant=self.constant * other.constant)
        for sites, mat in self._terms.items():
            if other.constant != 0:
                out._add_term(other.constant * mat, sites)
        for sites, mat in other._terms.items():
            if self.constant != 0:
                out._add_term(self.constant * mat, sites)
        for sa, ma in self._terms.items():
            for sb, mb in other._terms.items():
                union = tuple(sorted(set(sa) | set(sb)))
                ea = _embed_block(ma, sa, union, self._dims)
                eb = _embed_block(mb, sb, union, self._dims)
                out._add_term(ea @ eb, union)
        return out

    # -- connections ----------------------------------------------------

    def _local_index(self, s: np.ndarray, sites: tuple[int, ...]) -> int:
        idx = 0
        for site in sites:
            idx = idx * self._dims[site] + self._digit_maps[site][s[site]]
        return idx

    def _decode_local(self, idx: int, sites: tuple[int, ...]) -> list[float]:
        vals = [0.0] * len(sites)
        for pos in range(len(sites) - 1, -1, -1):
            site = sites[pos]
            d = self._dims[site]
            vals[pos] = self.hilbert.local_states[site][idx % d]
            idx //= d
        return vals

    def get_conn(self, s: np.ndarray):
        s = np.asarray(s, dtype=np.float64)
        states = [s.copy()]
        elements = [self.constant]
        where = {s.tobytes(): 0}
        for sites, mat in self._terms.items():
            row = self._local_index(s, sites)
            cols = np.nonzero(np.abs(mat[row]) > PRUNE_TOL)[0]
            for c in cols:
                mel = mat[row, c]
                if c == row:
                    elements[0] += mel
                    continue
                sp = s.copy()
                sp[list(sites)] = self._decode_local(int(c), sites)
                key = sp.tobytes()
                pos = where.get(key)
                if pos is None:
                    where[key] = len(states)
                    states.append(sp)
                    elements.append(mel)
                else:
                    elements[pos] += mel
        keep = [0] + [
            i for i in range(1, len(states)) if abs(elements[i]) > PRUNE_TOL
        ]
        return np.array([states[i] for i in keep]), np.array(
            [elements[i] for i in keep], dtype=np.complex128
        )

    def __repr__(self):
        return (
            f"LocalOperator(acting_on={self.acting_on}, "
            f"constant={self.constant})"
        )


def _embed_block(mat, sites, union, dims):
    extra = [s for s in union if s not in sites]
    full = np.asarray(mat)
    for s in extra:
        full = np.kron(full, np.eye(dims[s]))
    order = list(sites) + extra
    if order == list(union):
        return full
    k = len(order)
    d = [dims[s] for s in order]
    axes = [order.index(u) for u in union]
    T = full.reshape(d + d).transpose(axes + [k + a for a in axes])
    size = int(np.prod([dims[u] for u in union]))
    return T.reshape(size, size)


# -- Pauli strings ------------------------------------------------------


def _z_value(local: tuple[float, ...], v: float) -> float:
    # spin-like sites store the z eigenvalue directly, occupation-like
    # sites map n -> 1 - 2n (so Z measures fermion parity)
    if local == (-1.0, 1.0):
        return v
    if local == (0.0, 1.0):
        return 1.0 - 2.0 * v
    raise ValueError(f"PauliStrings needs 2-level sites (-1,1) or (0,1), got {local}")


_PAULI_PRODUCTS = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("Y", "I"): (1, "Y"), ("Z", "I"): (1, "Z"),
    ("X", "X"): (1, "I"), ("Y", "Y"): (1, "I"), ("Z", "Z"): (1, "I"),
    ("X", "Y"): (1j, "Z"), ("Y", "X"): (-1j, "Z"),
    ("Y", "Z"): (1j, "X"), ("Z", "Y"): (-1j, "X"),
    ("Z", "X"): (1j, "Y"), ("X", "Z"): (-1j, "Y"),
}


class PauliStrings(DiscreteOperator):
    """Weighted sum of products of Pauli matrices on 2-level sites.

    Strings are written with one letter in IXYZ per site, site 0 first.
    """

    def __init__(self, hilbert, strings, weights=None):
        super().__init__(hilbert)
        for states in hilbert.local_states:
            _z_value(states, states[0])  # validate site structure
        if isinstance(strings, str):
            strings = [strings]
        if weights is None:
            weights = [1.0] * len(strings)
        if len(weights) != len(strings):
            raise ValueError("need one weight per string")
        merged: dict[str, complex] = {}
        for st, w in zip(strings, weights):
            if len(st) != hilbert.size:
                raise ValueError(
                    f"string {st!r} length {len(st)} != size {hilbert.size}"
                )
            if any(c not in "IXYZ" for c in st):
                raise ValueError(f"invalid letter in {st!r}")
            merged[st] = merged.get(st, 0.0) + complex(w)
        self._ops = {
            st: w for st, w in merged.items() if abs(w) > PRUNE_TOL
        }
        if not self._ops:
            self._ops = {"I" * hilbert.size: 0.0}

    @property
    def strings(self) -> list[str]:
        return sorted(self._ops)

    def weight(self, string: str) -> complex:
        return self._ops.get(string, 0.0)

    def __add__(self, other):
        if np.isscalar(other):
            other = PauliStrings(
                self.hilbert, "I" * self.hilbert.size, [complex(other)]
            )
        if not isinstance(other, PauliStrings):
            return NotImplemented
        if other.hilbert != self.hilbert:
            raise ValueError("operators act on different spaces")
        strings = list(self._ops) + list(other._ops)
        weights = [self._ops[s] for s in self._ops] + [
            other._ops[s] for s in other._ops
        ]
        return PauliStrings(self.hilbert, strings, weights)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return PauliStrings(
            self.hilbert,
            list(self._ops),
            [scalar * w for w in self._ops.values()],
        )

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def __matmul__(self, other: "PauliStrings") -> "PauliStrings":
        if not isinstance(other, PauliStrings):
            return NotImplemented
        if other.hilbert != self.hilbert:
            raise ValueError("operators act on different spaces")
        strings, weights = [], []
        for sa, wa in self._ops.items():
            for sb, wb in other._ops.items():
                phase = 1.0 + 0.0j
                letters = []
                for a, b in zip(sa, sb):
                    ph, c = _PAULI_PRODUCTS[(a, b)]
                    phase *= ph
                    letters.append(c)
                strings.append("".join(letters))
                weights.append(phase * wa * wb)
        return PauliStrings(self.hilbert, strings, weights)

    def get_conn(self, s: np.ndarray):
        s = np.asarray(s, dtype=np.float64)
        locals_ = self.hilbert.local_states
        z = np.array([_z_value(locals_[i], v) for i, v in enumerate(s)])
        by_flip: dict[bytes, tuple[np.ndarray, complex]] = {}
        diag = 0.0 + 0.0j
        order: list[bytes] = []
        for st, w in self._ops.items():
            mel = complex(w)
            flip = np.zeros(self.hilbert.size, dtype=bool)
            for i, letter in enumerate(st):
                if letter == "Z":
                    mel *= z[i]
                elif letter == "X":
                    flip[i] = True
                elif letter == "Y":
                    flip[i] = True
                    mel *= -1j * z[i]
            if not flip.any():
                diag += mel
                continue
            key = flip.tobytes()
            if key in by_flip:
                prev, acc = by_flip[key]
                by_flip[key] = (prev, acc + mel)
            else:
                by_flip[key] = (flip, mel)
                order.append(key)
        states = [s.copy()]
        elements = [diag]
        for key in order:
            flip, mel = by_flip[key]
            if abs(mel) <= PRUNE_TOL:
                continue
            sp = s.copy()
            for i in np.nonzero(flip)[0]:
                a, b = locals_[i]
                sp[i] = b if sp[i] == a else a
            states.append(sp)
            elements.append(mel)
        return np.array(states), np.array(elements, dtype=np.complex128)

    def to_local_operator(self) -> LocalOperator:
        """Expand each string into a dense K-local block (I sites dropped)."""
        out = LocalOperator(self.hilbert)
        n = self.hilbert.size
        for st, w in self._ops.items():
            sites = tuple(i for i, c in enumerate(st) if c != "I")
            if not sites:
                out.constant += w
                continue
            block = np.array([[w]])
            for i in sites:
                block = np.kron(block, _pauli_matrix(st[i], self.hilbert.local_states[i]))
            out._add_term(block, sites)
        return out

    def __repr__(self):
        return f"PauliStrings({len(self._ops)} strings on {self.hilbert!r})"


def _pauli_matrix(letter: str, local: tuple[float, float]) -> np.ndarray:
    # matrix in the declared local basis order
    z0, z1 = _z_value(local, local[0]), _z_value(local, local[1])
    if letter == "Z":
        return np.diag([z0, z1]).astype(np.complex128)
    if letter == "X":
        return np.array([[0, 1], [1, 0]], dtype=np.complex128)
    if letter == "Y":
        # <s|Y|s'> = -i z(s) on the flipped pair
        return np.array([[0, -1j * z0], [-1j * z1, 0]], dtype=np.complex128)
    raise ValueError(letter)


# -- second-quantized fermions ------------------------------------------


def _parse_fermion_term(term) -> tuple[tuple[int, bool], ...]:
    if isinstance(term, str):
        ops = []
        for tok in term.split():
            if tok.endswith("^"):
                ops.append((int(tok[:-1]), True))
            else:
                ops.append((int(tok), False))
        return tuple(ops)
    return tuple((int(o), bool(d)) for o, d in term)


class FermionOperator2nd(DiscreteOperator):
    """Polynomial in fermionic creation/annihilation operators.

    Terms are strings like ``"1^ 2"`` (create on orbital 1, annihilate on
    orbital 2) or explicit ((orbital, dagger), ...) tuples, with one weight
    each. Matrix elements follow the Jordan-Wigner convention: applying
    f_i or f_i^dag to an occupation state picks up (-1)**(n_0+...+n_{i-1}).
    """

    def __init__(self, hilbert, terms, weights=None):
        super().__init__(hilbert)
        for states in hilbert.local_states:
            if states != (0.0, 1.0):
                raise ValueError("fermion operators need occupation (0,1) sites")
        if isinstance(terms, str):
            terms = [terms]
        parsed = [_parse_fermion_term(t) for t in terms]
        if weights is None:
            weights = [1.0] * len(parsed)
        if len(weights) != len(parsed):
            raise ValueError("need one weight per term")
        merged: dict[tuple, complex] = {}
        for ops, w in zip(parsed, weights):
            for orb, _ in ops:
                if not 0 <= orb < hilbert.size:
                    raise ValueError(f"orbital {orb} out of range")
            merged[ops] = merged.get(ops, 0.0) + complex(w)
        self._terms = {
            ops: w for ops, w in merged.items() if abs(w) > PRUNE_TOL
        }

    @property
    def terms(self) -> list[tuple]:
        return list(self._terms)

    def __add__(self, other):
        if not isinstance(other, FermionOperator2nd):
            return NotImplemented
        if other.hilbert != self.hilbert:
            raise ValueError("operators act on different spaces")
        terms = list(self._terms) + list(other._terms)
        weights = list(self._terms.values()) + list(other._terms.values())
        return FermionOperator2nd(self.hilbert, terms, weights)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return FermionOperator2nd(
            self.hilbert, list(self._terms), [scalar * w for w in self._terms.values()]
        )

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def __matmul__(self, other: "FermionOperator2nd") -> "FermionOperator2nd":
        if not isinstance(other, FermionOperator2nd):
            return NotImplemented
        if other.hilbert != self.hilbert:
            raise ValueError("operators act on different spaces")
        terms, weights = [], []
        for ta, wa in self._terms.items():
            for tb, wb in other._terms.items():
                terms.append(ta + tb)
                weights.append(wa * wb)
        return FermionOperator2nd(self.hilbert, terms, weights)

    def dagger(self) -> "FermionOperator2nd":
        terms, weights = [], []
        for ops, w in self._terms.items():
            terms.append(tuple((o, not d) for o, d in reversed(ops)))
            weights.append(np.conj(w))
        return FermionOperator2nd(self.hilbert, terms, weights)

    def get_conn(self, s: np.ndarray):
        s = np.asarray(s, dtype=np.float64)
        occ0 = s.astype(np.int64)
        states = [s.copy()]
        elements = [0.0 + 0.0j]
        where = {occ0.tobytes(): 0}
        for ops, w in self._terms.items():
            occ = occ0.copy()
            sign = 1.0
            alive = True
            # <s|T|s'> is nonzero iff T^dag |s> lands on |s'>; T^dag applies
            # the listed operators in order with daggers flipped
            for orb, dag in ops:
                want_filled = dag  # dagger flipped: creation becomes annihilation
                if want_filled:
                    if occ[orb] == 0:
                        alive = False
                        break
                    sign *= (-1.0) ** int(occ[:orb].sum())
                    occ[orb] = 0
                else:
                    if occ[orb] == 1:
                        alive = False
                        break
                    sign *= (-1.0) ** int(occ[:orb].sum())
                    occ[orb] = 1
            if not alive:
                continue
            mel = w * sign
            key = occ.tobytes()
            pos = where.get(key)
            if pos is None:
                where[key] = len(states)
                states.append(occ.astype(np.float64))
                elements.append(mel)
            else:
                elements[pos] += mel
        keep = [0] + [
            i for i in range(1, len(states)) if abs(elements[i]) > PRUNE_TOL
        ]
        return np.array([states[i] for i in keep]), np.array(
            [elements[i] for i in keep], dtype=np.complex128
        )

    def __repr__(self):
        return f"FermionOperator2nd({len(self._terms)} terms on {self.hilbert!r})"


def jordan_wigner(op: FermionOperator2nd, hilbert=None) -> PauliStrings:
    """Map a fermion operator to Pauli strings.

    f_i^dag = Z_0 ... Z_{i-1} (X_i - iY_i)/2 and f_i the conjugate. The
    result lives on the fermion space by default; pass a qubit space of the
    same size to retarget it.
    """
    if hilbert is None:
        hilbert = op.hilbert
    elif hilbert.size != op.hilbert.size:
        raise ValueError("target space size differs from the fermion space")
    n = hilbert.size
    total: PauliStrings | None = None
    for ops, w in op._terms.items():
        factor = PauliStrings(hilbert, "I" * n, [w])
        for orb, dag in ops:
            x = ["I"] * n
            y = ["I"] * n
            for j in range(orb):
                x[j] = "Z"
                y[j] = "Z"
            x[orb] = "X"
            y[orb] = "Y"
            sign = -1j if dag else 1j
            site_op = PauliStrings(
                hilbert, ["".join(x), "".join(y)], [0.5, 0.5 * sign]
            )
            factor = factor @ site_op
        total = factor if total is None else total + factor
    if total is None:
        total = PauliStrings(hilbert, "I" * n, [0.0])
    return total


# -- continuous-space operators -----------------------------------------


class ContinuousOperator:
    """Base class: operators with a local-energy estimator on Particle
    configurations."""

    def __init__(self, hilbert: Particle):
        if not isinstance(hilbert, Particle):
            raise TypeError("ContinuousOperator needs a Particle space")
        self.hilbert = hilbert

    def local_energies(self, model, params, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __add__(self, other):
        if isinstance(other, ContinuousOperator):
            return ContinuousSum(self.hilbert, [self, other], [1.0, 1.0])
        return NotImplemented

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return ContinuousSum(self.hilbert, [self], [complex(scalar)])

    __rmul__ = __mul__


class KineticEnergy(ContinuousOperator):
    """-1/2 sum_i (1/m_i) (d^2 ln psi + (d ln psi)^2), one term per degree
    of freedom; masses are given per particle."""

    def __init__(self, hilbert: Particle, masses=1.0):
        super().__init__(hilbert)
        m = np.asarray(masses, dtype=np.float64)
        if m.ndim == 0:
            m = np.full(hilbert.n_particles, float(m))
        if m.size != hilbert.n_particles:
            raise ValueError("need one mass per particle")
        if np.any(m <= 0):
            raise ValueError("masses must be positive")
        self.masses = m
        self._inv_mass_dof = np.repeat(1.0 / m, hilbert.ndim)

    def local_energies(self, model, params, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        grad = model.spatial_grad(params, x)  # (B, dof)
        lap = model.spatial_laplacian_terms(params, x)  # (B, dof)
        return -0.5 * ((lap + grad**2) * self._inv_mass_dof).sum(axis=1)


class PotentialEnergy(ContinuousOperator):
    """Multiplicative potential V(x); the callback gets one configuration
    (a flat dof vector) and returns a float."""

    def __init__(self, hilbert: Particle, potential, coefficient: float = 1.0):
        super().__init__(hilbert)
        self.potential = potential
        self.coefficient = coefficient

    def local_energies(self, model, params, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return self.coefficient * np.array(
            [self.potential(row) for row in x], dtype=np.float64
        )


class ContinuousSum(ContinuousOperator):
    def __init__(self, hilbert, parts, coefficients):
        super().__init__(hilbert)
        self.parts = list(parts)
        self.coefficients = [complex(c) for c in coefficients]

    def local_energies(self, model, params, x: np.ndarray) -> np.ndarray:
        out = None
        for c, p in zip(self.coefficients, self.parts):
            term = c * p.local_energies(model, params, x)
            out = term if out is None else out + term
        return np.real_if_close(out)

    def __add__(self, other):
        if isinstance(other, ContinuousSum):
            return ContinuousSum(
                self.hilbert,
                self.parts + other.parts,
                self.coefficients + other.coefficients,
            )
        if isinstance(other, ContinuousOperator):
            return ContinuousSum(
                self.hilbert, self.parts + [other], self.coefficients + [1.0]
            )
        return NotImplemented


# -- named spin-1/2 operators and Hamiltonians --------------------------


def _check_spin_half(hilbert, site):
    if hilbert.local_states[site] != (-1.0, 1.0):
        raise ValueError("Pauli factories need spin-1/2 sites with states (-1, 1)")


def sigmax(hilbert, site: int) -> LocalOperator:
    _check_spin_half(hilbert, site)
    return LocalOperator(hilbert, np.array([[0, 1], [1, 0]]), [site])


def sigmay(hilbert, site: int) -> LocalOperator:
    _check_spin_half(hilbert, site)
    # basis order (-1, +1): <s|Y|s'> = -i z(s)
    return LocalOperator(hilbert, np.array([[0, 1j], [-1j, 0]]), [site])


def sigmaz(hilbert, site: int) -> LocalOperator:
    _check_spin_half(hilbert, site)
    return LocalOperator(hilbert, np.diag([-1.0, 1.0]), [site])


def sigmap(hilbert, site: int) -> LocalOperator:
    """Raising operator |up><down| = (X + iY)/2."""
    _check_spin_half(hilbert, site)
    return LocalOperator(hilbert, np.array([[0, 0], [1, 0]]), [site])


def sigmam(hilbert, site: int) -> LocalOperator:
    """Lowering operator |down><up| = (X - iY)/2."""
    _check_spin_half(hilbert, site)
    return LocalOperator(hilbert, np.array([[0, 1], [0, 0]]), [site])


def ising(hilbert, graph, h: float, J: float = 1.0) -> LocalOperator:
    """Transverse-field Ising Hamiltonian J sum_<ij> sz_i sz_j - h sum_i sx_i
    (Pauli matrices)."""
    zz = np.kron(np.diag([-1.0, 1.0]), np.diag([-1.0, 1.0]))
    x = np.array([[0.0, 1.0], [1.0, 0.0]])
    ops, acting = [], []
    for u, v in graph.edges():
        ops.append(J * zz)
        acting.append([u, v])
    for i in range(hilbert.size):
        ops.append(-h * x)
        acting.append([i])
    for i in range(hilbert.size):
        _check_spin_half(hilbert, i)
    return LocalOperator(hilbert, ops, acting)


def heisenberg(hilbert, graph, J=1.0) -> LocalOperator:
    """Heisenberg Hamiltonian sum_k J_k sum_edges(order k) vec-sigma .
    vec-sigma, written with Pauli matrices. J may be a scalar (order-1
    edges) or a sequence with one coupling per neighbor order."""
    for i in range(hilbert.size):
        _check_spin_half(hilbert, i)
    sx = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    sy = np.array([[0, 1j], [-1j, 0]], dtype=np.complex128)
    sz = np.diag([-1.0, 1.0]).astype(np.complex128)
    bond = np.kron(sx, sx) + np.kron(sy, sy) + np.kron(sz, sz)
    Js = [J] if np.isscalar(J) else list(J)
    ops, acting = [], []
    for order, Jk in enumerate(Js, start=1):
        edges = graph.edges(order=order)
        if not edges:
            raise ValueError(f"graph has no order-{order} edges")
        for u, v in edges:
            ops.append(Jk * bond)
            acting.append([u, v])
    return LocalOperator(hilbert, ops, acting)


# -- local estimators ---------------------------------------------------


def local_values(op, log_amp, samples: np.ndarray, chunk_size: int | None = None):
    """Monte Carlo local estimators A(s) = sum_s' <s|O|s'> psi(s')/psi(s).

    ``log_amp`` maps a batch of configurations to log amplitudes. With the
    diagonal-first convention the first connected state of each sample is the
    sample itself, which anchors the ratio. Raises on non-finite logs.
    """
    if isinstance(op, ContinuousOperator):
        raise TypeError("use expect() on the state for continuous operators")
    samples = np.atleast_2d(samples)
    # chains revisit configurations constantly; evaluate each row once
    uniq, inverse = np.unique(samples, axis=0, return_inverse=True)
    conns = []
    mels = []
    offsets = [0]
    for s in uniq:
        cs, ms = op.get_conn(s)
        conns.append(cs)
        mels.append(ms)
        offsets.append(offsets[-1] + len(ms))
    stacked = np.concatenate(conns, axis=0)
    if chunk_size is None:
        logs = log_amp(stacked)
    else:
        parts = [
            log_amp(stacked[i : i + chunk_size])
            for i in range(0, stacked.shape[0], chunk_size)
        ]
        logs = np.concatenate(parts)
    logs = np.asarray(logs, dtype=np.complex128)
    vals = np.empty(uniq.shape[0], dtype=np.complex128)
    for k in range(uniq.shape[0]):
        lo, hi = offsets[k], offsets[k + 1]
        base = logs[lo]
        if not np.isfinite(base):
            raise FloatingPointError(
                "log amplitude of a sampled configuration is not finite"
            )
        ratios = np.exp(logs[lo:hi] - base)
        vals[k] = np.sum(mels[k] * ratios)
    return vals[inverse]
