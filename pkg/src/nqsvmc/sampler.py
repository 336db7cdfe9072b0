"""Markov chain and exact samplers over discrete and continuous spaces.

MetropolisSampler runs ``n_chains`` independent walkers. Each walker owns a
counter-based generator stream derived from the reset key and its chain
index, so trajectories depend only on (key, chain) and are reproducible
regardless of how many other chains run. One sweep is ``n_sweeps``
micro-steps (default: one per degree of freedom); one configuration is
retained per sweep after discarding ``n_discard_per_chain`` sweeps at the
start of every sample call.

Acceptance uses log u < 2 Re(log psi' - log psi) + L where L is the
proposal-asymmetry correction supplied by the transition rule.
"""

from __future__ import annotations

import math

import numpy as np

from .hilbert import DiscreteHilbert, Particle
from .rng import as_key

__all__ = [
    "LocalRule",
    "ExchangeRule",
    "HamiltonianRule",
    "GaussianRule",
    "MetropolisSampler",
    "ExactSampler",
    "MetropolisLocal",
    "MetropolisExchange",
    "MetropolisHamiltonian",
    "MetropolisGaussian",
]


class TransitionRule:
    """Proposal kernel interface.

    draw(gen, steps) pre-draws every random variate the rule consumes, one
    row per micro-step; propose maps (states, one row per chain) to new
    states plus the log correction ln q(s'->s) - ln q(s->s').
    """

    def check(self, hilbert) -> None:
        pass

    def reset(self, hilbert, states: np.ndarray) -> None:
        pass

    def draw(self, gen, steps: int) -> np.ndarray:
        raise NotImplementedError

    def propose(self, hilbert, states: np.ndarray, rand: np.ndarray):
        raise NotImplementedError


class LocalRule(TransitionRule):
    """Redraw one site to a different local state, uniformly."""

    def check(self, hilbert) -> None:
        if not isinstance(hilbert, DiscreteHilbert):
            raise TypeError("local updates need a discrete space")
        if hilbert.is_constrained:
            raise ValueError(
                "single-site updates cannot preserve a constrained space; "
                "use exchange or Hamiltonian moves"
            )

    def draw(self, gen, steps):
        return gen.uniform(size=(steps, 2))

    def propose(self, hilbert, states, rand):
        C, N = states.shape
        sites = np.minimum((rand[:, 0] * N).astype(np.int64), N - 1)
        new = states.copy()
        for c in range(C):
            site = sites[c]
            vals = hilbert.local_states[site]
            n = len(vals)
            j = min(int(rand[c, 1] * (n - 1)), n - 2)
            # skip the current value so the move always changes the site
            if j >= vals.index(states[c, site]):
                j += 1
            new[c, site] = vals[j]
        return new, np.zeros(C)


class ExchangeRule(TransitionRule):
    """Swap the values of two sites within graph distance d_max.

    Swaps conserve every sum of site values, so magnetization or particle
    number sectors are preserved.
    """

    def __init__(self, graph, d_max: int = 1):
        dist = graph.graph_distances()
        mask = (dist > 0) & (dist <= d_max)
        self.pairs = np.argwhere(np.triu(mask))
        if len(self.pairs) == 0:
            raise ValueError("no site pairs within the requested distance")

    def draw(self, gen, steps):
        return gen.uniform(size=(steps, 1))

    def propose(self, hilbert, states, rand):
        C = states.shape[0]
        idx = np.minimum((rand[:, 0] * len(self.pairs)).astype(np.int64), len(self.pairs) - 1)
        i, j = self.pairs[idx, 0], self.pairs[idx, 1]
        new = states.copy()
        rows = np.arange(C)
        new[rows, i], new[rows, j] = states[rows, j], states[rows, i]
        return new, np.zeros(C)


class HamiltonianRule(TransitionRule):
    """Propose uniformly among the off-diagonal connections of an operator.

    The proposal is asymmetric whenever the connection count n(s) varies, so
    detailed balance needs L = ln n(s) - ln n(s'). Setting
    ``log_correction=False`` drops L and deliberately biases the chain.
    """

    def __init__(self, operator, log_correction: bool = True):
        self.operator = operator
        self.log_correction = log_correction
        self._cache: dict[bytes, np.ndarray] = {}

    def check(self, hilbert) -> None:
        if self.operator.hilbert != hilbert:
            raise ValueError("operator acts on a different space")

    def _offdiag(self, s: np.ndarray) -> np.ndarray:
        key = np.asarray(s, dtype=np.float64).tobytes()
        hit = self._cache.get(key)
        if hit is None:
            sp, _ = self.operator.get_conn(s)
            hit = sp[1:]  # row 0 is the diagonal
            if len(self._cache) > 2**16:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def reset(self, hilbert, states) -> None:
        self._cache.clear()

    def draw(self, gen, steps):
        return gen.uniform(size=(steps, 1))

    def propose(self, hilbert, states, rand):
        C = states.shape[0]
        new = states.copy()
        corr = np.zeros(C)
        for c in range(C):
            conns = self._offdiag(states[c])
            n = len(conns)
            if n == 0:
                continue
            pick = min(int(rand[c, 0] * n), n - 1)
            prop = conns[pick]
            new[c] = prop
            if self.log_correction:
                m = len(self._offdiag(prop))
                corr[c] = math.log(n) - math.log(m) if m else -math.inf
        return new, corr


class GaussianRule(TransitionRule):
    """Shift every coordinate by sigma * normal noise (continuous spaces)."""

    def __init__(self, sigma: float = 1.0):
        self.sigma = float(sigma)
        self._dof: int | None = None

    def check(self, hilbert) -> None:
        if not isinstance(hilbert, Particle):
            raise TypeError("Gaussian moves need a continuous space")
        self._dof = hilbert.size

    def draw(self, gen, steps):
        return gen.standard_normal(size=(steps, self._dof))

    def propose(self, hilbert, states, rand):
        new = hilbert.wrap(states + self.sigma * rand)
        return new, np.zeros(states.shape[0])


class MetropolisSampler:
    def __init__(
        self,
        hilbert,
        rule: TransitionRule,
        n_chains: int = 16,
        n_sweeps: int | None = None,
        n_discard_per_chain: int | None = None,
    ):
        rule.check(hilbert)
        self.hilbert = hilbert
        self.rule = rule
        self.n_chains = int(n_chains)
        self.n_sweeps = int(n_sweeps) if n_sweeps is not None else int(hilbert.size)
        self.n_discard_per_chain = n_discard_per_chain
        self._states: np.ndarray | None = None
        self._gens: list | None = None
        self.acceptance: float = float("nan")

    def reset(self, key) -> None:
        key = as_key(key)
        k_init, k_run = key.split(2)
        self._states = np.atleast_2d(
            self.hilbert.random_state(k_init, self.n_chains)
        ).astype(np.float64)
        self._gens = [k_run.child(c).generator() for c in range(self.n_chains)]
        self.rule.reset(self.hilbert, self._states)

    def sample(self, model, params, n_samples: int, chunk_size: int | None = None):
        """Draw at least n_samples configurations; returns (C, per_chain, N)."""
        if self._states is None:
            raise RuntimeError("sampler.reset(key) must be called before sampling")
        C = self.n_chains
        per = -(-int(n_samples) // C)
        discard = self.n_discard_per_chain
        if discard is None:
            discard = max(per // 10, 1)
        T = (discard + per) * self.n_sweeps

        blocks = np.stack([self.rule.draw(g, T) for g in self._gens])  # (C, T, k)
        accept_u = np.stack([g.uniform(size=T) for g in self._gens])  # (C, T)

        states = self._states
        logcur = model.apply_chunked(params, states, chunk_size)
        out = np.empty((C, per, self.hilbert.size))
        n_acc = 0
        kept = 0
        for t in range(T):
            prop, corr = self.rule.propose(self.hilbert, states, blocks[:, t])
            lognew = model.apply_chunked(params, prop, chunk_size)
            delta = 2.0 * (lognew.real - logcur.real) + corr
            with np.errstate(divide="ignore"):
                acc = np.log(accept_u[:, t]) < delta
            states = np.where(acc[:, None], prop, states)
            logcur = np.where(acc, lognew, logcur)
            n_acc += int(acc.sum())
            if (t + 1) % self.n_sweeps == 0:
                sweep = (t + 1) // self.n_sweeps
                if sweep > discard:
                    out[:, kept] = states
                    kept += 1
        self._states = states
        self.acceptance = n_acc / (T * C)
        return out


class ExactSampler:
    """Independent draws from the Born distribution by inverse CDF over the
    enumerated space."""

    def __init__(self, hilbert):
        self.hilbert = hilbert
        self._key = None
        self._counter = 0

    def reset(self, key) -> None:
        self._key = as_key(key)
        self._counter = 0
        self.acceptance = 1.0

    def sample(self, model, params, n_samples: int, chunk_size: int | None = None):
        if self._key is None:
            raise RuntimeError("sampler.reset(key) must be called before sampling")
        states = self.hilbert.all_states()
        logs = model.apply_chunked(params, states, chunk_size)
        w = np.exp(2.0 * (logs.real - logs.real.max()))
        cdf = np.cumsum(w)
        cdf /= cdf[-1]
        gen = self._key.child(self._counter).generator()
        self._counter += 1
        u = gen.uniform(size=int(n_samples))
        idx = np.searchsorted(cdf, u, side="right")
        idx = np.minimum(idx, len(states) - 1)
        return states[idx][None, :, :]


# convenience constructors matching the common sampler names


def MetropolisLocal(hilbert, **kw) -> MetropolisSampler:
    return MetropolisSampler(hilbert, LocalRule(), **kw)


def MetropolisExchange(hilbert, graph, d_max: int = 1, **kw) -> MetropolisSampler:
    return MetropolisSampler(hilbert, ExchangeRule(graph, d_max), **kw)


def MetropolisHamiltonian(hilbert, operator, log_correction: bool = True, **kw) -> MetropolisSampler:
    return MetropolisSampler(hilbert, HamiltonianRule(operator, log_correction), **kw)


def MetropolisGaussian(hilbert, sigma: float = 1.0, n_sweeps: int = 1, **kw) -> MetropolisSampler:
    return MetropolisSampler(hilbert, GaussianRule(sigma), n_sweeps=n_sweeps, **kw)
