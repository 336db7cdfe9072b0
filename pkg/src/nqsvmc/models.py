"""Variational wavefunction models.

Every model maps a batch of configurations to log amplitudes and carries
closed-form derivatives:

- ``log_amp(params, x) -> (B,) complex``
- ``log_grad(params, x) -> tree`` with a leading batch axis per leaf
  (the Jacobian rows d log psi / d theta)
- ``jvp(params, x, v) -> (B,)`` directional derivative along a tree v
- ``vjp(params, x, w) -> tree`` equal to sum_k w_k * (Jacobian row k),
  with no conjugation applied

Complex-parameter models are holomorphic in their parameters unless
constructed with ``holomorphic=False`` (useful to exercise the split
real/imaginary handling downstream). Initialization draws truncated normal
variates (|z| < 2) scaled by ``sigma``; complex leaves get independent real
and imaginary draws.
"""

from __future__ import annotations

import numpy as np

from .hilbert import Particle
from .paramtree import tree_leaves, tree_map
from .rng import as_key

__all__ = [
    "Jastrow",
    "RBM",
    "RBMSymm",
    "GCNN",
    "Gaussian",
    "lncosh",
    "truncated_normal",
    "chunked_apply",
]

LN2 = float(np.log(2.0))


def lncosh(z: np.ndarray) -> np.ndarray:
    """log cosh with the large-|Re z| overflow folded out."""
    z = np.asarray(z)
    s = np.where(z.real >= 0, 1.0, -1.0)
    return s * z + np.log1p(np.exp(-2.0 * s * z)) - LN2


def truncated_normal(gen, shape, sigma, dtype) -> np.ndarray:
    def draw(n):
        out = gen.standard_normal(n)
        bad = np.abs(out) >= 2.0
        while np.any(bad):
            out[bad] = gen.standard_normal(int(bad.sum()))
            bad = np.abs(out) >= 2.0
        return out

    n = int(np.prod(shape)) if shape else 1
    if np.issubdtype(np.dtype(dtype), np.complexfloating):
        vals = draw(n) + 1j * draw(n)
    else:
        vals = draw(n)
    return (sigma * vals).reshape(shape).astype(dtype)


def chunked_apply(fn, x: np.ndarray, chunk_size: int | None):
    """Apply fn to row chunks of x and concatenate the results."""
    x = np.atleast_2d(x)
    if chunk_size is None or chunk_size >= x.shape[0]:
        return fn(x)
    parts = [fn(x[i : i + chunk_size]) for i in range(0, x.shape[0], chunk_size)]
    return np.concatenate(parts, axis=0)


class Model:
    """Shared bookkeeping: dtype, holomorphic flag, init scale."""

    def __init__(self, param_dtype=np.complex128, sigma: float = 0.01, holomorphic=None):
        self.param_dtype = np.dtype(param_dtype)
        self.sigma = float(sigma)
        if np.issubdtype(self.param_dtype, np.complexfloating):
            self.holomorphic = True if holomorphic is None else bool(holomorphic)
        else:
            self.holomorphic = False

    def init_params(self, key):
        raise NotImplementedError

    def log_amp(self, params, x):
        raise NotImplementedError

    def apply_chunked(self, params, x, chunk_size=None):
        return chunked_apply(lambda b: self.log_amp(params, b), x, chunk_size)

    def n_params(self, params) -> int:
        return sum(l.size for _, l in tree_leaves(params))


class Jastrow(Model):
    """Two-body amplitude log psi = x^T W x with a symmetric kernel."""

    def __init__(self, hilbert, param_dtype=np.complex128, sigma=0.01, holomorphic=None):
        super().__init__(param_dtype, sigma, holomorphic)
        self.hilbert = hilbert
        self.n_sites = hilbert.size

    def init_params(self, key):
        gen = as_key(key).generator()
        W = truncated_normal(gen, (self.n_sites, self.n_sites), self.sigma, self.param_dtype)
        return {"W": (W + W.T) / 2}

    def log_amp(self, params, x):
        x = np.atleast_2d(x)
        return np.einsum("bi,ij,bj->b", x, params["W"], x).astype(np.complex128)

    def log_grad(self, params, x):
        x = np.atleast_2d(x)
        return {"W": x[:, :, None] * x[:, None, :]}

    def jvp(self, params, x, v):
        x = np.atleast_2d(x)
        return np.einsum("bi,ij,bj->b", x, v["W"], x)

    def vjp(self, params, x, w):
        x = np.atleast_2d(x)
        return {"W": np.einsum("b,bi,bj->ij", w, x, x)}


class RBM(Model):
    """Restricted Boltzmann machine amplitude.

    log psi = a . x + sum_j lncosh(W x + b)_j with alpha * N hidden units.
    """

    def __init__(
        self,
        hilbert,
        alpha: int = 1,
        param_dtype=np.complex128,
        sigma=0.01,
        use_visible_bias: bool = True,
        use_hidden_bias: bool = True,
        holomorphic=None,
    ):
        super().__init__(param_dtype, sigma, holomorphic)
        self.hilbert = hilbert
        self.n_sites = hilbert.size
        self.n_hidden = int(alpha * hilbert.size)
        self.use_visible_bias = use_visible_bias
        self.use_hidden_bias = use_hidden_bias

    def init_params(self, key):
        k1, k2, k3 = as_key(key).split(3)
        params = {
            "W": truncated_normal(
                k1.generator(), (self.n_hidden, self.n_sites), self.sigma, self.param_dtype
            )
        }
        if self.use_visible_bias:
            params["a"] = truncated_normal(
                k2.generator(), (self.n_sites,), self.sigma, self.param_dtype
            )
        if self.use_hidden_bias:
            params["b"] = truncated_normal(
                k3.generator(), (self.n_hidden,), self.sigma, self.param_dtype
            )
        return params

    def _theta(self, params, x):
        th = x @ params["W"].T
        if self.use_hidden_bias:
            th = th + params["b"]
        return th

    def log_amp(self, params, x):
        x = np.atleast_2d(x)
        out = lncosh(self._theta(params, x)).sum(axis=1)
        if self.use_visible_bias:
            out = out + x @ params["a"]
        return out.astype(np.complex128)

    def log_grad(self, params, x):
        x = np.atleast_2d(x)
        t = np.tanh(self._theta(params, x))
        out = {"W": t[:, :, None] * x[:, None, :]}
        if self.use_visible_bias:
            out["a"] = x.astype(t.dtype)
        if self.use_hidden_bias:
            out["b"] = t
        return out

    def jvp(self, params, x, v):
        x = np.atleast_2d(x)
        t = np.tanh(self._theta(params, x))
        dth = x @ v["W"].T
        if self.use_hidden_bias:
            dth = dth + v["b"]
        out = (t * dth).sum(axis=1)
        if self.use_visible_bias:
            out = out + x @ v["a"]
        return out

    def vjp(self, params, x, w):
        x = np.atleast_2d(x)
        t = np.tanh(self._theta(params, x))
        wt = w[:, None] * t
        out = {"W": wt.T @ x}
        if self.use_visible_bias:
            out["a"] = w @ x
        if self.use_hidden_bias:
            out["b"] = wt.sum(axis=0)
        return out


class RBMSymm(Model):
    """RBM with kernels tied over a permutation group; the amplitude is
    exactly invariant under the group action.

    alpha counts independent feature channels; each channel contributes
    lncosh(sum_r K[c, r] x[p_g[r]] + b_c) summed over group elements g.
    """

    def __init__(
        self,
        hilbert,
        group,
        alpha: int = 1,
        param_dtype=np.complex128,
        sigma=0.01,
        use_hidden_bias: bool = True,
        holomorphic=None,
    ):
        super().__init__(param_dtype, sigma, holomorphic)
        self.hilbert = hilbert
        self.group = group
        if group.n_sites != hilbert.size:
            raise ValueError("group permutes a different number of sites")
        self.n_sites = hilbert.size
        self.features = int(alpha)
        self.use_hidden_bias = use_hidden_bias

    def init_params(self, key):
        k1, k2 = as_key(key).split(2)
        params = {
            "W": truncated_normal(
                k1.generator(), (self.features, self.n_sites), self.sigma, self.param_dtype
            )
        }
        if self.use_hidden_bias:
            params["b"] = truncated_normal(
                k2.generator(), (self.features,), self.sigma, self.param_dtype
            )
        return params

    def _gathered(self, x):
        # xg[b, g, r] = x[b, p_g[r]]
        return np.atleast_2d(x)[:, self.group.perms]

    def _features(self, params, xg):
        th = np.einsum("cr,bgr->bcg", params["W"], xg)
        if self.use_hidden_bias:
            th = th + params["b"][None, :, None]
        return th

    def log_amp(self, params, x):
        xg = self._gathered(x)
        return lncosh(self._features(params, xg)).sum(axis=(1, 2)).astype(np.complex128)

    def log_grad(self, params, x):
        xg = self._gathered(x)
        t = np.tanh(self._features(params, xg))
        out = {"W": np.einsum("bcg,bgr->bcr", t, xg)}
        if self.use_hidden_bias:
            out["b"] = t.sum(axis=2)
        return out

    def jvp(self, params, x, v):
        xg = self._gathered(x)
        t = np.tanh(self._features(params, xg))
        dth = np.einsum("cr,bgr->bcg", v["W"], xg)
        if self.use_hidden_bias:
            dth = dth + v["b"][None, :, None]
        return (t * dth).sum(axis=(1, 2))

    def vjp(self, params, x, w):
        xg = self._gathered(x)
        t = np.tanh(self._features(params, xg))
        wt = w[:, None, None] * t
        out = {"W": np.einsum("bcg,bgr->cr", wt, xg)}
        if self.use_hidden_bias:
            out["b"] = wt.sum(axis=(0, 2))
        return out


class GCNN(Model):
    """Group-equivariant network over a permutation group.

    An embedding layer lifts the configuration to one feature per group
    element, (layers - 1) group convolutions mix them while preserving
    equivariance, and the output contracts against irrep characters:
    psi = sum_{c,g} chi_g exp(f_cg). For a one-dimensional irrep this makes
    psi(g.s) = chi_g psi(s) exact. Kernels use the expanded form indexed by
    h^-1 g through the group product table.
    """

    def __init__(
        self,
        hilbert,
        group,
        layers: int = 2,
        features: int = 2,
        characters: np.ndarray | None = None,
        param_dtype=np.complex128,
        sigma=0.01,
        holomorphic=None,
    ):
        super().__init__(param_dtype, sigma, holomorphic)
        self.hilbert = hilbert
        self.group = group
        if group.n_sites != hilbert.size:
            raise ValueError("group permutes a different number of sites")
        if layers < 1:
            raise ValueError("need at least the embedding layer")
        self.n_sites = hilbert.size
        self.n_layers = int(layers)
        if np.isscalar(features):
            self.features = (int(features),) * layers
        else:
            self.features = tuple(int(f) for f in features)
            if len(self.features) != layers:
                raise ValueError("need one feature count per layer")
        if characters is None:
            characters = np.ones(len(group))
        self.characters = np.asarray(characters, dtype=np.complex128)
        if self.characters.shape != (len(group),):
            raise ValueError("need one character per group element")
        # K[h, g] = index of h^-1 g; the expanded kernel is W[..., K]
        inv = group.inverses
        self._K = group.table[inv][:, :]

    def init_params(self, key):
        keys = as_key(key).split(2 * self.n_layers)
        params: dict = {
            "embed": {
                "W": truncated_normal(
                    keys[0].generator(),
                    (self.features[0], self.n_sites),
                    self.sigma,
                    self.param_dtype,
                ),
                "b": truncated_normal(
                    keys[1].generator(), (self.features[0],), self.sigma, self.param_dtype
                ),
            }
        }
        conv = {}
        for l in range(1, self.n_layers):
            conv[f"{l:02d}"] = {
                "W": truncated_normal(
                    keys[2 * l].generator(),
                    (self.features[l], self.features[l - 1], len(self.group)),
                    self.sigma,
                    self.param_dtype,
                ),
                "b": truncated_normal(
                    keys[2 * l + 1].generator(),
                    (self.features[l],),
                    self.sigma,
                    self.param_dtype,
                ),
            }
        if conv:
            params["conv"] = conv
        return params

    def _conv_names(self):
        return [f"{l:02d}" for l in range(1, self.n_layers)]

    def _expand(self, W):
        # W[o, a, k] -> W[o, a, h, g] = W[o, a, K[h, g]]
        return W[:, :, self._K]

    def _forward(self, params, x):
        """Returns (xg, pre-activations Z per layer, activations A per layer)."""
        xg = np.atleast_2d(x)[:, self.group.perms]  # (B, |G|, N)
        Z0 = np.einsum("ir,bgr->big", params["embed"]["W"], xg)
        Z0 = Z0 + params["embed"]["b"][None, :, None]
        Zs = [Z0]
        As = [lncosh(Z0)]
        for name in self._conv_names():
            lay = params["conv"][name]
            Wexp = self._expand(lay["W"])
            Z = np.einsum("oahg,bah->bog", Wexp, As[-1])
            Z = Z + lay["b"][None, :, None]
            Zs.append(Z)
            As.append(lncosh(Z))
        return xg, Zs, As

    def _contract(self, A_last):
        # log sum_{c,g} chi_g exp(A[c, g]), stabilized
        m = np.max(A_last.real, axis=(1, 2))
        E = np.exp(A_last - m[:, None, None])
        S = np.einsum("g,bcg->b", self.characters, E)
        with np.errstate(divide="ignore", invalid="ignore"):
            return m + np.log(S), E, S

    def log_amp(self, params, x):
        _, _, As = self._forward(params, x)
        out, _, _ = self._contract(As[-1])
        return out.astype(np.complex128)

    def log_grad(self, params, x):
        xg, Zs, As = self._forward(params, x)
        _, E, S = self._contract(As[-1])
        B = xg.shape[0]
        cot = (self.characters[None, None, :] * E) / S[:, None, None]  # dL/dA_last
        grads: dict = {}
        conv_grads: dict = {}
        for idx in range(self.n_layers - 1, 0, -1):
            name = f"{idx:02d}"
            cot_Z = cot * np.tanh(Zs[idx])  # (B, f_o, |G|)
            A_in = As[idx - 1]
            lay = params["conv"][name]
            # gW[b, o, a, k] = sum_h cot_Z[b, o, table[h, k]] A_in[b, a, h]
            gath = cot_Z[:, :, self.group.table]  # (B, f_o, |G|, |G|)
            gW = np.einsum("bohk,bah->boak", gath, A_in)
            gb = cot_Z.sum(axis=2)
            conv_grads[name] = {"W": gW, "b": gb}
            Wexp = self._expand(lay["W"])
            cot = np.einsum("oahg,bog->bah", Wexp, cot_Z)
        cot_Z0 = cot * np.tanh(Zs[0])
        grads["embed"] = {
            "W": np.einsum("big,bgr->bir", cot_Z0, xg),
            "b": cot_Z0.sum(axis=2),
        }
        if conv_grads:
            grads["conv"] = conv_grads
        return grads

    def jvp(self, params, x, v):
        xg, Zs, As = self._forward(params, x)
        dZ = np.einsum("ir,bgr->big", v["embed"]["W"], xg)
        dZ = dZ + v["embed"]["b"][None, :, None]
        dA = np.tanh(Zs[0]) * dZ
        for idx, name in enumerate(self._conv_names(), start=1):
            lay = params["conv"][name]
            Wexp = self._expand(lay["W"])
            dWexp = self._expand(v["conv"][name]["W"])
            dZ = np.einsum("oahg,bah->bog", Wexp, dA) + np.einsum(
                "oahg,bah->bog", dWexp, As[idx - 1]
            )
            dZ = dZ + v["conv"][name]["b"][None, :, None]
            dA = np.tanh(Zs[idx]) * dZ
        _, E, S = self._contract(As[-1])
        return np.einsum("g,bcg,bcg->b", self.characters, E, dA) / S

    def vjp(self, params, x, w):
        g = self.log_grad(params, x)

        def contract(leaf):
            return np.tensordot(w, leaf, axes=(0, 0))

        return tree_map(contract, g)


class Gaussian(Model):
    """Gaussian amplitude log psi = -x^T (T T^T)^-1 x on continuous
    configurations; T is a real square matrix."""

    def __init__(self, hilbert: Particle, sigma=1.0):
        super().__init__(np.float64, sigma)
        self.hilbert = hilbert
        self.dof = hilbert.size

    def init_params(self, key):
        # order-one entries keep the covariance well conditioned at the start
        gen = as_key(key).generator()
        return {"T": gen.standard_normal((self.dof, self.dof))}

    def _precision(self, params):
        T = params["T"]
        sigma = T @ T.T
        cond = np.linalg.cond(sigma)
        if not np.isfinite(cond) or cond > 1e12:
            raise FloatingPointError(
                f"covariance condition number {cond:.3e} exceeds 1e12"
            )
        return np.linalg.inv(sigma)

    def log_amp(self, params, x):
        x = np.atleast_2d(x)
        A = self._precision(params)
        return (-np.einsum("bi,ij,bj->b", x, A, x)).astype(np.complex128)

    def _yz(self, params, x):
        A = self._precision(params)
        Y = np.atleast_2d(x) @ A  # rows y = A x (A symmetric)
        Z = Y @ params["T"]  # rows T^T y
        return Y, Z

    def log_grad(self, params, x):
        Y, Z = self._yz(params, x)
        return {"T": 2.0 * Y[:, :, None] * Z[:, None, :]}

    def jvp(self, params, x, v):
        Y, Z = self._yz(params, x)
        return 2.0 * np.einsum("bi,ij,bj->b", Y, v["T"], Z)

    def vjp(self, params, x, w):
        Y, Z = self._yz(params, x)
        return {"T": 2.0 * np.einsum("b,bi,bj->ij", w, Y, Z)}

    # spatial derivatives for kinetic-energy estimators
    def spatial_grad(self, params, x):
        A = self._precision(params)
        return -2.0 * np.atleast_2d(x) @ A

    def spatial_laplacian_terms(self, params, x):
        A = self._precision(params)
        x = np.atleast_2d(x)
        return np.broadcast_to(-2.0 * np.diag(A), (x.shape[0], self.dof)).copy()
