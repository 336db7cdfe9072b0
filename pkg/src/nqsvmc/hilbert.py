"""Computational bases for discrete and continuous degrees of freedom.

Discrete spaces enumerate configurations in mixed-radix order with site 0 as
the most significant digit, each site running over its local states in
declared order. Constrained spaces (fixed magnetization, fixed particle
number, per-sector fermion populations) enumerate the ordered subsequence of
the unconstrained enumeration that satisfies every constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import RngKey, as_key

__all__ = [
    "SumRule",
    "DiscreteHilbert",
    "Spin",
    "Qubit",
    "Fock",
    "SpinOrbitalFermions",
    "Particle",
]

ENUMERATION_CAP = 2**16


@dataclass(frozen=True)
class SumRule:
    """Constraint: configuration values at ``sites`` must sum to ``total``."""

    sites: tuple[int, ...]
    total: float

    def satisfied(self, states: np.ndarray) -> np.ndarray:
        s = np.asarray(states)
        return np.isclose(s[..., list(self.sites)].sum(axis=-1), self.total)


class DiscreteHilbert:
    """Finite computational basis, a product of per-site local state sets.

    Parameters
    ----------
    local_states:
        One sequence of allowed values per site, in declared order.
    constraint:
        Optional tuple of :class:`SumRule`. Only configurations satisfying
        every rule belong to the space.
    """

    def __init__(self, local_states, constraint=(), label: str | None = None):
        self._locals = tuple(
            tuple(float(v) for v in states) for states in local_states
        )
        if any(len(s) < 1 for s in self._locals):
            raise ValueError("every site needs at least one local state")
        for states in self._locals:
            if len(set(states)) != len(states):
                raise ValueError(f"duplicate local state in {states}")
        self._constraint = tuple(constraint)
        for rule in self._constraint:
            if len(set(rule.sites)) != len(rule.sites):
                raise ValueError("constraint lists a site twice")
            if any(i < 0 or i >= self.size for i in rule.sites):
                raise ValueError("constraint site out of range")
            lo = sum(min(self._locals[i]) for i in rule.sites)
            hi = sum(max(self._locals[i]) for i in rule.sites)
            if not lo <= rule.total <= hi:
                raise ValueError(
                    f"constraint total {rule.total} outside achievable "
                    f"range [{lo}, {hi}]"
                )
        self._label = label
        self._dims = tuple(len(s) for s in self._locals)
        # radix[i] = number of index steps one increment of digit i is worth
        radix = [1] * self.size
        for i in range(self.size - 2, -1, -1):
            radix[i] = radix[i + 1] * self._dims[i + 1]
        self._radix = tuple(radix)
        self._states_cache: np.ndarray | None = None
        self._index_cache: dict[bytes, int] | None = None

    # -- basic geometry -------------------------------------------------

    @property
    def size(self) -> int:
        return len(self._locals)

    @property
    def shape(self) -> tuple[int, ...]:
        return self._dims

    @property
    def is_constrained(self) -> bool:
        return bool(self._constraint)

    @property
    def constraint(self) -> tuple[SumRule, ...]:
        return self._constraint

    def states_at_site(self, i: int) -> np.ndarray:
        return np.array(self._locals[i])

    @property
    def local_states(self) -> tuple[tuple[float, ...], ...]:
        return self._locals

    # -- enumeration ----------------------------------------------------

    @property
    def n_states(self) -> int:
        if not self.is_constrained:
            return int(np.prod(self._dims, dtype=np.int64)) if self.size else 1
        return len(self._enumerate())

    def all_states(self) -> np.ndarray:
        """All configurations, shape (n_states, size), enumeration order."""
        return self._enumerate().copy()

    def _enumerate(self) -> np.ndarray:
        if self._states_cache is None:
            if not self.is_constrained:
                n = self.n_states
                if n > ENUMERATION_CAP:
                    raise RuntimeError(
                        f"enumeration of {n} states exceeds cap {ENUMERATION_CAP}"
                    )
                idx = np.arange(n)
                self._states_cache = self._numbers_to_states_free(idx)
            else:
                self._states_cache = self._enumerate_constrained()
            self._states_cache.setflags(write=False)
        return self._states_cache

    def _enumerate_constrained(self) -> np.ndarray:
        # DFS in digit order; prune with per-rule achievable suffix sums.
        n_sites = self.size
        rules = self._constraint
        suffix_lo = []
        suffix_hi = []
        for rule in rules:
            in_rule = np.zeros(n_sites, bool)
            in_rule[list(rule.sites)] = True
            lo = np.zeros(n_sites + 1)
            hi = np.zeros(n_sites + 1)
            for i in range(n_sites - 1, -1, -1):
                lo[i] = lo[i + 1] + (min(self._locals[i]) if in_rule[i] else 0.0)
                hi[i] = hi[i + 1] + (max(self._locals[i]) if in_rule[i] else 0.0)
            suffix_lo.append((in_rule, lo))
            suffix_hi.append(hi)

        out: list[list[float]] = []
        config = [0.0] * n_sites
        sums = [0.0] * len(rules)

        def feasible(depth: int) -> bool:
            for r, rule in enumerate(rules):
                lo = sums[r] + suffix_lo[r][1][depth]
                hi = sums[r] + suffix_hi[r][depth]
                if not (lo - 1e-9 <= rule.total <= hi + 1e-9):
                    return False
            return True

        def walk(depth: int) -> None:
            if depth == n_sites:
                out.append(config.copy())
                if len(out) > ENUMERATION_CAP:
                    raise RuntimeError(
                        f"enumeration exceeds cap {ENUMERATION_CAP}"
                    )
                return
            for v in self._locals[depth]:
                config[depth] = v
                for r, (in_rule, _) in enumerate(suffix_lo):
                    if in_rule[depth]:
                        sums[r] += v
                if feasible(depth + 1):
                    walk(depth + 1)
                for r, (in_rule, _) in enumerate(suffix_lo):
                    if in_rule[depth]:
                        sums[r] -= v
            config[depth] = 0.0

        walk(0)
        return np.array(out, dtype=np.float64).reshape(len(out), n_sites)

    # -- index <-> configuration ---------------------------------------

    def _numbers_to_states_free(self, numbers: np.ndarray) -> np.ndarray:
        numbers = np.asarray(numbers, dtype=np.int64)
        out = np.empty(numbers.shape + (self.size,), dtype=np.float64)
        rem = numbers
        for i in range(self.size):
            digit, rem = np.divmod(rem, self._radix[i])
            out[..., i] = np.asarray(self._locals[i])[digit]
        return out

    def numbers_to_states(self, numbers) -> np.ndarray:
        numbers = np.asarray(numbers, dtype=np.int64)
        if np.any(numbers < 0) or np.any(numbers >= self.n_states):
            raise IndexError("state index out of range")
        if not self.is_constrained:
            return self._numbers_to_states_free(numbers)
        return self._enumerate()[numbers].copy()

    def number_to_state(self, number: int) -> np.ndarray:
        return self.numbers_to_states(np.asarray([number]))[0]

    def _index_map(self) -> dict[bytes, int]:
        if self._index_cache is None:
            table = self._enumerate()
            self._index_cache = {
                row.tobytes(): i for i, row in enumerate(table)
            }
        return self._index_cache

    def states_to_numbers(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        if states.shape[-1] != self.size:
            raise ValueError(
                f"configuration length {states.shape[-1]} != size {self.size}"
            )
        flat = states.reshape(-1, self.size) + 0.0  # normalize -0.0
        if not self.is_constrained:
            nums = np.zeros(flat.shape[0], dtype=np.int64)
            for i in range(self.size):
                vals = np.asarray(self._locals[i])
                order = np.argsort(vals)
                pos = np.clip(
                    np.searchsorted(vals[order], flat[:, i]), 0, len(vals) - 1
                )
                digit = order[pos]
                good = np.isclose(vals[digit], flat[:, i])
                if not np.all(good):
                    raise ValueError(
                        f"configuration {flat[~good][0]} not in space"
                    )
                nums += digit * self._radix[i]
        else:
            index = self._index_map()
            nums = np.empty(flat.shape[0], dtype=np.int64)
            for k, row in enumerate(flat):
                try:
                    nums[k] = index[row.tobytes()]
                except KeyError:
                    raise ValueError(f"configuration {row} not in space") from None
        return nums.reshape(states.shape[:-1])

    def state_to_number(self, state) -> int:
        return int(self.states_to_numbers(np.asarray(state)[None, :])[0])

    # -- sampling -------------------------------------------------------

    def random_state(self, key, size: int | None = None) -> np.ndarray:
        """Uniform random configurations satisfying every constraint."""
        gen = key if isinstance(key, np.random.Generator) else as_key(key).generator()
        n = 1 if size is None else int(size)
        if not self.is_constrained:
            out = self._random_free(gen, n, np.arange(self.size))
        else:
            out = self._random_constrained(gen, n)
        return out[0] if size is None else out

    def _random_free(self, gen, n, sites) -> np.ndarray:
        out = np.empty((n, self.size), dtype=np.float64)
        for i in sites:
            vals = np.asarray(self._locals[i])
            out[:, i] = vals[gen.integers(len(vals), size=n)]
        return out

    def _random_constrained(self, gen, n) -> np.ndarray:
        rules = self._constraint
        covered = set()
        disjoint = True
        for rule in rules:
            if covered & set(rule.sites):
                disjoint = False
            covered |= set(rule.sites)
        integral = all(
            float(v).is_integer()
            for rule in rules
            for i in rule.sites
            for v in self._locals[i]
        ) and all(float(r.total).is_integer() for r in rules)
        if disjoint and integral:
            out = np.empty((n, self.size), dtype=np.float64)
            free_sites = [i for i in range(self.size) if i not in covered]
            if free_sites:
                out[:, free_sites] = self._random_free(gen, n, free_sites)[:, free_sites]
            for rule in rules:
                self._draw_fixed_sum(gen, n, rule, out)
            return out
        return self._rejection_sample(gen, n)

    def _draw_fixed_sum(self, gen, n, rule: SumRule, out: np.ndarray) -> None:
        # Exact sequential draw: P(value) proportional to the number of ways
        # the remaining sites can absorb the remaining total. Uniform over the
        # constrained set; reduces to stars-and-bars when no local cap binds.
        sites = sorted(rule.sites)
        vals = [np.asarray(self._locals[i], dtype=np.int64) for i in sites]
        lo = [int(v.min()) for v in vals]
        hi = [int(v.max()) for v in vals]
        # counts[k]: dict-free table over achievable sums of sites[k:]
        base = [0] * (len(sites) + 1)
        top = [0] * (len(sites) + 1)
        for k in range(len(sites) - 1, -1, -1):
            base[k] = base[k + 1] + lo[k]
            top[k] = top[k + 1] + hi[k]
        counts: list[np.ndarray] = [np.array([1.0])]  # sites[k:] sums, offset base[k]
        for k in range(len(sites) - 1, -1, -1):
            span = top[k] - base[k] + 1
            c = np.zeros(span)
            prev = counts[0]
            for v in vals[k]:
                off = int(v) - lo[k]
                c[off : off + prev.size] += prev
            counts.insert(0, c)
        remaining = np.full(n, int(rule.total), dtype=np.int64)
        for k, site in enumerate(sites):
            nxt = counts[k + 1]
            w = np.zeros((n, len(vals[k])))
            for j, v in enumerate(vals[k]):
                t = remaining - int(v) - base[k + 1]
                ok = (t >= 0) & (t < nxt.size)
                w[ok, j] = nxt[t[ok]]
            tot = w.sum(axis=1)
            if np.any(tot == 0):
                raise RuntimeError("constraint total is not achievable")
            cum = np.cumsum(w, axis=1)
            u = gen.random(n) * tot
            pick = (cum < u[:, None]).sum(axis=1)
            chosen = vals[k][pick]
            out[:, site] = chosen.astype(np.float64)
            remaining -= chosen

    def _rejection_sample(self, gen, n) -> np.ndarray:
        rows = []
        tried = 0
        while len(rows) < n:
            batch = self._random_free(gen, max(n, 128), np.arange(self.size))
            ok = np.ones(batch.shape[0], bool)
            for rule in self._constraint:
                ok &= rule.satisfied(batch)
            rows.extend(batch[ok])
            tried += batch.shape[0]
            if tried > 1_000_000:
                raise RuntimeError(
                    "rejection sampling exceeded 1e6 attempts; constraint too tight"
                )
        return np.array(rows[:n])

    # -- composition ----------------------------------------------------

    def __mul__(self, other: "DiscreteHilbert") -> "DiscreteHilbert":
        if not isinstance(other, DiscreteHilbert):
            return NotImplemented
        if self.size == 0:
            return other
        if other.size == 0:
            return self
        if self.is_constrained or other.is_constrained:
            raise ValueError(
                "tensor product of constrained spaces is not supported"
            )
        return DiscreteHilbert(
            self._locals + other._locals,
            label=f"{self!r}*{other!r}",
        )

    def __pow__(self, k: int) -> "DiscreteHilbert":
        if k < 0:
            raise ValueError("power must be >= 0")
        out = DiscreteHilbert(())
        for _ in range(k):
            out = out * self
        return out

    def _key(self):
        return (self._locals, self._constraint)

    def __eq__(self, other):
        return isinstance(other, DiscreteHilbert) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        if self._label:
            return self._label
        return f"DiscreteHilbert(size={self.size}, shape={self.shape})"


def _half_integer_str(two_x: int) -> str:
    return str(two_x // 2) if two_x % 2 == 0 else f"{two_x}/2"


class Spin(DiscreteHilbert):
    """N spins of magnitude s; values are 2m for m = -s..s.

    ``total_sz`` (in units of hbar) restricts to configurations with
    sum(values) == 2 * total_sz.
    """

    def __init__(self, s: float = 0.5, N: int = 1, total_sz: float | None = None):
        two_s = int(round(2 * s))
        if two_s < 1 or not np.isclose(2 * s, two_s):
            raise ValueError(f"s must be a positive half integer, got {s}")
        values = tuple(float(v) for v in range(-two_s, two_s + 1, 2))
        rules = ()
        if total_sz is not None:
            target = 2 * total_sz
            if not np.isclose(target, round(target)):
                raise ValueError(f"total_sz must be a half integer, got {total_sz}")
            target = int(round(target))
            if (target - N * two_s) % 2 != 0:
                raise ValueError(
                    f"total_sz={total_sz} unreachable for {N} spins of s={s}"
                )
            rules = (SumRule(tuple(range(N)), float(target)),)
        self._s = s
        self._total_sz = total_sz
        label = f"Spin(s={_half_integer_str(two_s)}, N={N}"
        if total_sz is not None:
            label += f", total_sz={total_sz}"
        label += ")"
        super().__init__([values] * N, rules, label=label)


class Qubit(DiscreteHilbert):
    """N two-level systems with local states (0, 1)."""

    def __init__(self, N: int = 1):
        super().__init__([(0.0, 1.0)] * N, label=f"Qubit(N={N})")


class Fock(DiscreteHilbert):
    """N bosonic modes with occupations 0..n_max.

    ``n_particles`` fixes the total occupation.
    """

    def __init__(self, n_max: int, N: int = 1, n_particles: int | None = None):
        if n_max < 1:
            raise ValueError("n_max must be >= 1")
        values = tuple(float(v) for v in range(n_max + 1))
        rules = ()
        if n_particles is not None:
            rules = (SumRule(tuple(range(N)), float(n_particles)),)
        self.n_max = n_max
        label = f"Fock(n_max={n_max}, N={N}"
        if n_particles is not None:
            label += f", n_particles={n_particles}"
        label += ")"
        super().__init__([values] * N, rules, label=label)


class SpinOrbitalFermions(DiscreteHilbert):
    """Second-quantized fermions on n_orbitals orbitals.

    With spin s the space holds (2s+1) spin sectors stored sector-major:
    flattened index = sector * n_orbitals + orbital, sectors ordered from
    most negative spin projection. ``n_fermions`` may be a total (int) or a
    per-sector tuple of populations.
    """

    def __init__(
        self,
        n_orbitals: int,
        s: float | None = None,
        n_fermions: int | tuple[int, ...] | None = None,
    ):
        if s is None:
            n_sectors = 1
        else:
            two_s = int(round(2 * s))
            if two_s < 1 or not np.isclose(2 * s, two_s):
                raise ValueError(f"s must be a positive half integer, got {s}")
            n_sectors = two_s + 1
        n_sites = n_orbitals * n_sectors
        rules: tuple[SumRule, ...] = ()
        if n_fermions is not None:
            if isinstance(n_fermions, (tuple, list)):
                if s is None:
                    raise ValueError("per-sector populations need a spin")
                if len(n_fermions) != n_sectors:
                    raise ValueError(
                        f"expected {n_sectors} sector populations, "
                        f"got {len(n_fermions)}"
                    )
                rules = tuple(
                    SumRule(
                        tuple(range(b * n_orbitals, (b + 1) * n_orbitals)),
                        float(nf),
                    )
                    for b, nf in enumerate(n_fermions)
                )
            else:
                rules = (SumRule(tuple(range(n_sites)), float(n_fermions)),)
        self.n_orbitals = n_orbitals
        self.spin = s
        self.n_spin_subsectors = n_sectors
        self.n_fermions = n_fermions
        label = f"SpinOrbitalFermions(n_orbitals={n_orbitals}"
        if s is not None:
            label += f", s={_half_integer_str(int(round(2 * s)))}"
        if n_fermions is not None:
            label += f", n_fermions={n_fermions}"
        label += ")"
        super().__init__([(0.0, 1.0)] * n_sites, rules, label=label)

    def orbital_index(self, orbital: int, sector: int = 0) -> int:
        """Flattened site index of (orbital, spin sector)."""
        if not 0 <= orbital < self.n_orbitals:
            raise ValueError("orbital out of range")
        if not 0 <= sector < self.n_spin_subsectors:
            raise ValueError("spin sector out of range")
        return sector * self.n_orbitals + orbital


class Particle:
    """N particles moving in a d-dimensional box.

    Degrees of freedom are stored particle-major: a configuration is the
    length N*d vector (x_0, y_0, ..., x_1, y_1, ...). Box extents may be
    infinite only along non-periodic directions.
    """

    def __init__(self, N: int, L, pbc):
        self.n_particles = int(N)
        self.extent = np.atleast_1d(np.asarray(L, dtype=np.float64))
        self.ndim = self.extent.size
        if np.isscalar(pbc) or isinstance(pbc, (bool, np.bool_)):
            self.pbc = np.full(self.ndim, bool(pbc))
        else:
            self.pbc = np.asarray(pbc, dtype=bool)
        if self.pbc.size != self.ndim:
            raise ValueError("pbc flags do not match the number of dimensions")
        if np.any(self.pbc & ~np.isfinite(self.extent)):
            raise ValueError("periodic directions need a finite extent")
        if np.any(self.extent <= 0):
            raise ValueError("box extents must be positive")

    @property
    def size(self) -> int:
        return self.n_particles * self.ndim

    @property
    def is_constrained(self) -> bool:
        return False

    def random_state(self, key, size: int | None = None) -> np.ndarray:
        """Uniform positions along finite axes, standard normal along
        infinite ones."""
        gen = key if isinstance(key, np.random.Generator) else as_key(key).generator()
        n = 1 if size is None else int(size)
        out = np.empty((n, self.size))
        for d in range(self.ndim):
            cols = [p * self.ndim + d for p in range(self.n_particles)]
            if np.isfinite(self.extent[d]):
                out[:, cols] = gen.uniform(0.0, self.extent[d], size=(n, self.n_particles))
            else:
                out[:, cols] = gen.standard_normal((n, self.n_particles))
        return out[0] if size is None else out

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Fold periodic coordinates back into [0, L)."""
        x = np.array(x, dtype=np.float64, copy=True)
        for d in range(self.ndim):
            if self.pbc[d]:
                cols = [p * self.ndim + d for p in range(self.n_particles)]
                x[..., cols] = np.mod(x[..., cols], self.extent[d])
        return x

    def __repr__(self):
        return (
            f"Particle(N={self.n_particles}, L={tuple(self.extent)}, "
            f"pbc={tuple(bool(b) for b in self.pbc)})"
        )
