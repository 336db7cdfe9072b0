"""Quantum geometric tensor handles and linear solvers.

Both implementations expose the curvature matrix

    G_ij = sum_k w_k (dO_k,i)* dO_k,j,   dO = O - sum_k w_k O_k

over log-derivative rows O_k = d log psi(s_k) / d theta, without requiring
the caller to materialize anything. Weights default to uniform; full
summation passes Born weights.

Modes:
- "holomorphic": complex parameters, G is the P x P complex covariance
- "real": real parameters, G = Re[...] acting on real vectors
- "complex": complex parameters treated as 2P real degrees of freedom;
  vectors are packed [Re v; Im v] and G is the real embedding
  [[Re G, -Im G], [Im G, Re G]]

``QGTJacobian`` stores the centered, sqrt(w)-scaled Jacobian and applies
two matmuls per product. ``QGTOnTheFly`` composes the model's jvp/vjp and
never stores the Jacobian. A diagonal shift eps adds eps * v to every
product.

solve() accepts parameter trees or packed vectors and offers "cg"
(matrix-free conjugate gradient), "cholesky", and "svd" (pseudoinverse with
an rcond cutoff).
"""

from __future__ import annotations

import copy

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .paramtree import flatten, flatten_batch, spec_of, unflatten

__all__ = ["QGTJacobian", "QGTOnTheFly", "infer_mode"]


def infer_mode(model) -> str:
    if np.issubdtype(model.param_dtype, np.complexfloating):
        return "holomorphic" if model.holomorphic else "complex"
    return "real"


class _QGTBase:
    def __init__(self, model, params, samples, weights=None, mode=None, diag_shift=0.0):
        self.model = model
        self.params = params
        self.samples = np.atleast_2d(samples)
        B = self.samples.shape[0]
        if weights is None:
            weights = np.full(B, 1.0 / B)
        else:
            weights = np.asarray(weights, dtype=np.float64)
            if weights.shape != (B,):
                raise ValueError("need one weight per sample")
        self.weights = weights
        self.mode = mode if mode is not None else infer_mode(model)
        if self.mode not in ("holomorphic", "real", "complex"):
            raise ValueError(f"unknown mode {self.mode!r}")
        self.diag_shift = float(diag_shift)
        self.spec = spec_of(params)
        self.n_params = self.spec.n_params

    @property
    def dim(self) -> int:
        """Linear dimension of the packed system."""
        return 2 * self.n_params if self.mode == "complex" else self.n_params

    # packing between parameter trees / complex vectors and solver vectors
    def _coerce(self, v):
        """Returns (packed vector, form) with form in tree/vector/complex."""
        if isinstance(v, np.ndarray) and v.ndim == 1:
            vec, form = v, "vector"
        else:
            vec, _ = flatten(v)
            form = "tree"
        if self.mode == "complex":
            if vec.size == self.dim and not np.iscomplexobj(vec):
                return np.asarray(vec, dtype=np.float64), form
            if form == "vector":
                form = "complex"
            vec = np.asarray(vec, dtype=np.complex128)
            return np.concatenate([vec.real, vec.imag]), form
        if self.mode == "real":
            return np.asarray(vec).real.astype(np.float64), form
        return np.asarray(vec, dtype=np.complex128), form

    def _restore(self, x: np.ndarray, form: str):
        if self.mode == "complex" and form in ("tree", "complex"):
            n = self.n_params
            x = x[:n] + 1j * x[n:]
        return unflatten(self.spec, x) if form == "tree" else x

    def pack(self, v) -> np.ndarray:
        return self._coerce(v)[0]

    def unpack(self, vec: np.ndarray):
        if self.mode == "complex":
            n = self.n_params
            vec = vec[:n] + 1j * vec[n:]
        return unflatten(self.spec, vec)

    def _mv_packed(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def matvec(self, v):
        """Product G v (+ shift) in the same container shape as v."""
        pv, form = self._coerce(v)
        return self._restore(self._mv_packed(pv), form)

    def add_diag_shift(self, eps: float):
        """Copy of this handle with eps added to the existing shift."""
        if eps < 0:
            raise ValueError("diagonal shift must be nonnegative")
        other = copy.copy(self)
        other.diag_shift = self.diag_shift + float(eps)
        return other

    def to_dense(self, cap: int = 4096) -> np.ndarray:
        n = self.dim
        if n > cap:
            raise ValueError(f"{n} parameters exceed the densification cap {cap}")
        dtype = np.float64 if self.mode in ("real", "complex") else np.complex128
        out = np.empty((n, n), dtype=dtype)
        e = np.zeros(n, dtype=dtype)
        for j in range(n):
            e[j] = 1.0
            out[:, j] = self._mv_packed(e)
            e[j] = 0.0
        return out

    def solve(self, rhs, method: str = "cg", x0=None, rtol: float = 1e-5,
              rcond: float = 1e-12, maxiter: int | None = None):
        """Solve (G + eps I) x = rhs; returns (x, info dict).

        rhs may be a parameter tree or a packed vector; the solution comes
        back in the same form.
        """
        b, form = self._coerce(rhs)
        if not np.all(np.isfinite(b)):
            raise FloatingPointError("linear solve received non-finite right-hand side")
        info: dict = {"method": method}
        if method == "cg":
            op = spla.LinearOperator(
                (self.dim, self.dim), matvec=self._mv_packed, dtype=b.dtype
            )
            x0p = self.pack(x0) if x0 is not None else None
            if maxiter is None:
                maxiter = 10 * self.dim
            x, code = spla.cg(op, b, x0=x0p, rtol=rtol, atol=0.0, maxiter=maxiter)
            info["converged"] = code == 0
            info["exit_code"] = int(code)
        elif method == "cholesky":
            dense = self.to_dense()
            c, low = sla.cho_factor(dense)
            x = sla.cho_solve((c, low), b)
            info["converged"] = True
        elif method == "svd":
            dense = self.to_dense()
            u, s, vh = np.linalg.svd(dense, hermitian=True)
            cut = s > rcond * s[0]
            info["rank"] = int(cut.sum())
            info["converged"] = True
            x = vh.conj().T[:, cut] @ ((u.conj().T[cut] @ b) / s[cut])
        else:
            raise ValueError(f"unknown solver {method!r}")
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("linear solve produced non-finite entries")
        return self._restore(x, form), info


JACOBIAN_ENTRY_CAP = 2**26


class QGTJacobian(_QGTBase):
    def __init__(self, model, params, samples, weights=None, mode=None, diag_shift=0.0):
        super().__init__(model, params, samples, weights, mode, diag_shift)
        B = self.samples.shape[0]
        if B * self.n_params > JACOBIAN_ENTRY_CAP:
            raise MemoryError(
                f"Jacobian of {B} x {self.n_params} entries exceeds the cap; "
                "use QGTOnTheFly"
            )
        O = flatten_batch(model.log_grad(params, self.samples), B)
        if not np.all(np.isfinite(O)):
            raise FloatingPointError("log-derivative rows contain non-finite entries")
        O = O - self.weights @ O
        self._X = np.sqrt(self.weights)[:, None] * O

    def _mv_packed(self, v):
        if self.mode == "holomorphic":
            out = self._X.conj().T @ (self._X @ v)
        elif self.mode == "real":
            out = (self._X.conj().T @ (self._X @ v)).real
        else:
            n = self.n_params
            cv = v[:n] + 1j * v[n:]
            u = self._X.conj().T @ (self._X @ cv)
            out = np.concatenate([u.real, u.imag])
        return out + self.diag_shift * v


class QGTOnTheFly(_QGTBase):
    def _mv_complexish(self, cv):
        v_tree = unflatten(self.spec, cv)
        u = self.model.jvp(self.params, self.samples, v_tree)
        c = u - self.weights @ u
        cot = self.weights * np.conj(c)
        y_tree = self.model.vjp(self.params, self.samples, cot)
        y, _ = flatten(y_tree)
        return np.conj(y)

    def _mv_packed(self, v):
        if self.mode == "holomorphic":
            out = self._mv_complexish(np.asarray(v, dtype=np.complex128))
        elif self.mode == "real":
            out = self._mv_complexish(np.asarray(v, dtype=np.float64)).real
        else:
            n = self.n_params
            u = self._mv_complexish(v[:n] + 1j * v[n:])
            out = np.concatenate([u.real, u.imag])
        return out + self.diag_shift * v
