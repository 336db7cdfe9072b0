import numpy as np
import pytest

from nqsvmc import lattice, oracle
from nqsvmc.hilbert import Spin
from nqsvmc.models import RBM
from nqsvmc.operator import heisenberg, ising, sigmam, sigmax, sigmaz
from nqsvmc.rng import RngKey


def tfim(L, h=1.0):
    hi = Spin(0.5, N=L)
    return hi, ising(hi, lattice.chain(L), h=h)


def test_spectrum_ascending_and_satisfies_eigenproblem():
    hi, ham = tfim(4)
    w, v = oracle.ed_spectrum(ham, k=4)
    assert np.all(np.diff(w) >= -1e-12)
    H = ham.to_dense()
    for i in range(4):
        residual = H @ v[:, i] - w[i] * v[:, i]
        assert np.linalg.norm(residual) < 1e-10
        assert np.linalg.norm(v[:, i]) == pytest.approx(1.0)


def test_two_site_ising_spectrum_by_hand():
    hi = Spin(0.5, N=2)
    ham = ising(hi, lattice.chain(2, pbc=False), h=0.0)
    # J sz sz with no field: eigenvalues -1, -1, 1, 1
    w, _ = oracle.ed_spectrum(ham, k=4)
    np.testing.assert_allclose(w, [-1.0, -1.0, 1.0, 1.0], atol=1e-12)
    ham_x = ising(hi, lattice.chain(2, pbc=False), h=2.0, J=0.0)
    # pure field -2 sum sx: eigenvalues -4, 0, 0, 4
    w, _ = oracle.ed_spectrum(ham_x, k=4)
    np.testing.assert_allclose(w, [-4.0, 0.0, 0.0, 4.0], atol=1e-12)


def test_heisenberg_two_sites_singlet():
    hi = Spin(0.5, N=2)
    ham = heisenberg(hi, lattice.chain(2, pbc=False))
    w, _ = oracle.ed_spectrum(ham, k=4)
    # singlet at -3, triplet at +1 (Pauli convention)
    np.testing.assert_allclose(w, [-3.0, 1.0, 1.0, 1.0], atol=1e-12)


def test_sparse_path_matches_dense(monkeypatch):
    hi, ham = tfim(6)
    w_dense, v_dense = oracle.ed_spectrum(ham, k=3)
    monkeypatch.setattr(oracle, "DENSE_ED_CAP", 16)
    w_sparse, v_sparse = oracle.ed_spectrum(ham, k=3)
    np.testing.assert_allclose(w_sparse, w_dense, atol=1e-9)
    for i in range(3):
        overlap = abs(np.vdot(v_sparse[:, i], v_dense[:, i]))
        assert overlap == pytest.approx(1.0, abs=1e-8)


def test_ground_state_helper():
    hi, ham = tfim(4)
    e0, psi0 = oracle.ed_ground_state(ham)
    assert isinstance(e0, float)
    w, _ = oracle.ed_spectrum(ham, k=1)
    assert e0 == pytest.approx(float(w[0]))
    assert np.linalg.norm(psi0) == pytest.approx(1.0)


def test_non_hermitian_rejected():
    hi = Spin(0.5, N=3)
    with pytest.raises(ValueError, match="Hermitian"):
        oracle.ed_spectrum(sigmam(hi, 0))


def test_space_size_cap():
    hi, ham = tfim(15)
    with pytest.raises(ValueError, match="too large"):
        oracle.ed_spectrum(ham)


def test_evolve_is_unitary():
    hi, ham = tfim(4)
    gen = np.random.default_rng(0)
    psi0 = gen.standard_normal(16) + 1j * gen.standard_normal(16)
    psi0 /= np.linalg.norm(psi0)
    psi_t = oracle.exact_evolve(ham, psi0, 0.7)
    assert np.linalg.norm(psi_t) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(oracle.exact_evolve(ham, psi0, 0.0), psi0, atol=1e-12)


def test_evolve_eigenstate_picks_up_phase():
    hi, ham = tfim(3)
    e0, psi0 = oracle.ed_ground_state(ham)
    t = 0.4
    psi_t = oracle.exact_evolve(ham, psi0, t)
    np.testing.assert_allclose(psi_t, np.exp(-1j * e0 * t) * psi0, atol=1e-12)


def test_evolve_time_array():
    hi, ham = tfim(3)
    psi0 = np.zeros(8)
    psi0[0] = 1.0
    ts = np.array([0.0, 0.1, 0.2])
    out = oracle.exact_evolve(ham, psi0, ts)
    assert out.shape == (3, 8)
    np.testing.assert_allclose(out[0], psi0, atol=1e-14)
    # composition: evolving the t=0.1 row by 0.1 more gives the t=0.2 row
    np.testing.assert_allclose(oracle.exact_evolve(ham, out[1], 0.1), out[2],
                               atol=1e-12)


def test_expectation_conserved_under_evolution():
    hi, ham = tfim(4, h=0.5)
    gen = np.random.default_rng(1)
    psi0 = gen.standard_normal(16) + 1j * gen.standard_normal(16)
    psi0 /= np.linalg.norm(psi0)
    H = ham.to_dense()
    e0 = np.real(psi0.conj() @ H @ psi0)
    psi_t = oracle.exact_evolve(ham, psi0, 1.3)
    assert np.real(psi_t.conj() @ H @ psi_t) == pytest.approx(e0, abs=1e-10)


def test_dense_model_state_normalized_and_proportional():
    hi = Spin(0.5, N=3)
    model = RBM(hi, sigma=0.3)
    params = model.init_params(RngKey(4))
    psi = oracle.dense_model_state(model, params, hi)
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    raw = np.exp(model.log_amp(params, hi.all_states()))
    ratio = psi / raw
    np.testing.assert_allclose(ratio, ratio[0], atol=1e-12)
