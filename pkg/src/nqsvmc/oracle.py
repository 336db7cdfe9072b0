"""Exact reference implementations used to cross-check stochastic results.

Dense double precision throughout; anything above 2^12 states switches to
sparse Lanczos. All functions are pure.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse.linalg as spla

__all__ = ["ed_spectrum", "ed_ground_state", "exact_evolve", "dense_model_state"]

DENSE_ED_CAP = 2**12
ED_CAP = 2**14


def _check_hermitian(op):
    n = op.hilbert.n_states
    if n > ED_CAP:
        raise ValueError(f"space too large for exact diagonalization ({n} states)")
    if n > DENSE_ED_CAP:
        A = op.to_sparse().tocsr()
        gap = abs(A - A.conj().T)
        if gap.count_nonzero() and gap.max() > 1e-10:
            raise ValueError("operator is not Hermitian")
        return A
    A = op.to_dense()
    if np.abs(A - A.conj().T).max() > 1e-10:
        raise ValueError("operator is not Hermitian")
    return A


def ed_spectrum(op, k: int = 1):
    """Smallest k eigenpairs; returns (values ascending, column vectors)."""
    A = _check_hermitian(op)
    n = A.shape[0]
    if n <= DENSE_ED_CAP:
        if hasattr(A, "toarray"):
            A = A.toarray()
        w, v = np.linalg.eigh(A)
        return w[:k], v[:, :k]
    w, v = spla.eigsh(A, k=k, which="SA")
    order = np.argsort(w)
    return w[order], v[:, order]


def ed_ground_state(op):
    w, v = ed_spectrum(op, k=1)
    return float(w[0]), v[:, 0]


def exact_evolve(op, psi0: np.ndarray, t):
    """e^{-i H t} psi0 via eigendecomposition.

    t may be a scalar (returns a vector) or an array (returns one row per
    time).
    """
    A = _check_hermitian(op)
    if hasattr(A, "toarray"):
        A = A.toarray()
    w, v = np.linalg.eigh(A)
    psi0 = np.asarray(psi0, dtype=np.complex128)
    coef = v.conj().T @ psi0
    ts = np.atleast_1d(np.asarray(t, dtype=np.float64))
    out = np.empty((len(ts), len(psi0)), dtype=np.complex128)
    for i, ti in enumerate(ts):
        out[i] = v @ (np.exp(-1j * w * ti) * coef)
    return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out


def dense_model_state(model, params, hilbert) -> np.ndarray:
    """Normalized amplitude vector over the enumerated basis."""
    states = hilbert.all_states()
    logs = model.log_amp(params, states)
    psi = np.exp(logs - logs.real.max())
    return psi / np.linalg.norm(psi)
