import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nqsvmc import lattice, operator
from nqsvmc.hilbert import Fock, Qubit, Spin, SpinOrbitalFermions
from nqsvmc.operator import (
    FermionOperator2nd,
    LocalOperator,
    PauliStrings,
    heisenberg,
    ising,
    jordan_wigner,
    local_values,
    sigmam,
    sigmap,
    sigmax,
    sigmay,
    sigmaz,
)
from nqsvmc.rng import RngKey

# written in the declared local basis order (-1 first, +1 second), which is
# what dense matrices and state numbering use
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, 1j], [-1j, 0]])
SZ = np.diag([-1.0, 1.0]).astype(complex)


def kron_chain(n, ops):
    out = np.eye(1, dtype=complex)
    for i in range(n):
        out = np.kron(out, ops.get(i, np.eye(2)))
    return out


def test_single_site_paulis():
    hi = Spin(0.5, N=1)
    assert np.allclose(sigmax(hi, 0).to_dense(), SX)
    assert np.allclose(sigmay(hi, 0).to_dense(), SY)
    assert np.allclose(sigmaz(hi, 0).to_dense(), SZ)
    assert np.allclose(
        (sigmap(hi, 0) @ sigmam(hi, 0)).to_dense(), np.diag([0.0, 1.0])
    )


def test_pauli_algebra_on_two_sites():
    hi = Spin(0.5, N=2)
    lhs = (sigmax(hi, 0) @ sigmay(hi, 0) - sigmay(hi, 0) @ sigmax(hi, 0)).to_dense()
    assert np.allclose(lhs, 2j * kron_chain(2, {0: SZ}))
    # operators on different sites commute
    ab = (sigmax(hi, 0) @ sigmaz(hi, 1)).to_dense()
    ba = (sigmaz(hi, 1) @ sigmax(hi, 0)).to_dense()
    assert np.allclose(ab, ba)


def test_sum_square_matrix():
    hi = Spin(0.5, N=2)
    op = sigmax(hi, 0) + sigmax(hi, 1)
    sq = (op @ op).to_dense()
    expect = np.array(
        [[2, 0, 0, 2], [0, 2, 2, 0], [0, 2, 2, 0], [2, 0, 0, 2]], dtype=complex
    )
    assert np.array_equal(sq, expect)


def test_dense_ordering_matches_state_enumeration():
    # index i of the dense matrix must correspond to all_states()[i]
    hi = Spin(0.5, N=3)
    op = sigmaz(hi, 1)
    states = hi.all_states()
    diag = np.diag(op.to_dense()).real
    assert np.allclose(diag, states[:, 1])


def test_get_conn_reassembles_dense():
    hi = Spin(0.5, N=4)
    g = lattice.chain(4, pbc=True)
    op = ising(hi, g, h=0.7) + 0.3 * sigmay(hi, 2)
    states = hi.all_states()
    nums = hi.states_to_numbers(states)
    dense = np.zeros((16, 16), dtype=complex)
    for i, s in enumerate(states):
        sp, mels = op.get_conn(s)
        cols = hi.states_to_numbers(sp)
        for c, m in zip(cols, mels):
            dense[nums[i], c] += m
    assert np.allclose(dense, op.to_dense())


def test_get_conn_diagonal_first_and_unique():
    hi = Spin(0.5, N=3)
    g = lattice.chain(3, pbc=True)
    op = ising(hi, g, h=1.0)
    s = hi.all_states()[5]
    sp, mels = op.get_conn(s)
    assert np.array_equal(sp[0], s)
    assert len(np.unique(hi.states_to_numbers(sp))) == len(sp)


def test_ising_dense_vs_kron():
    g = lattice.chain(4, pbc=True)
    hi = Spin(0.5, N=4)
    h, J = 0.9, 1.3
    dense = ising(hi, g, h=h, J=J).to_dense()
    expect = np.zeros((16, 16), dtype=complex)
    for u, v in g.edges():
        expect += J * kron_chain(4, {u: SZ, v: SZ})
    for i in range(4):
        expect -= h * kron_chain(4, {i: SX})
    assert np.allclose(dense, expect)


def test_heisenberg_dense_vs_kron():
    g = lattice.chain(3, pbc=True)
    hi = Spin(0.5, N=3)
    dense = heisenberg(hi, g).to_dense()
    expect = np.zeros((8, 8), dtype=complex)
    for u, v in g.edges():
        for P in (SX, SY, SZ):
            expect += kron_chain(3, {u: P, v: P})
    assert np.allclose(dense, expect)


def test_local_operator_block_merging():
    hi = Spin(0.5, N=2)
    op = LocalOperator(hi, [SZ, SZ], [(0,), (0,)])
    assert np.allclose(op.to_dense(), 2 * kron_chain(2, {0: SZ}))


def test_local_operator_site_permutation():
    # a block given on (1, 0) must act identically to its transpose-reordered
    # form on (0, 1)
    hi = Spin(0.5, N=2)
    rng = np.random.default_rng(1)
    m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    swap = m.reshape(2, 2, 2, 2).transpose(1, 0, 3, 2).reshape(4, 4)
    a = LocalOperator(hi, m, (1, 0)).to_dense()
    b = LocalOperator(hi, swap, (0, 1)).to_dense()
    assert np.allclose(a, b)


def test_local_operator_shape_errors():
    hi = Spin(0.5, N=2)
    with pytest.raises(ValueError):
        LocalOperator(hi, np.eye(3), (0,))
    with pytest.raises(ValueError):
        LocalOperator(hi, np.eye(4), (0, 0))


def test_pauli_strings_match_kron():
    hi = Qubit(3)
    op = PauliStrings(hi, ["XYZ", "IIX"], [0.5, -2.0])
    expect = 0.5 * kron_chain(3, {0: SX, 1: SY, 2: SZ}) - 2.0 * kron_chain(
        3, {2: SX}
    )
    assert np.allclose(op.to_dense(), expect)


def test_pauli_strings_product_collects_phase():
    hi = Qubit(1)
    xy = PauliStrings(hi, "X") @ PauliStrings(hi, "Y")
    assert xy.strings == ["Z"]
    assert xy.weight("Z") == pytest.approx(1j)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_pauli_strings_on_spin_basis(seed):
    # spin sites store +-1 with -1 first; X/Y/Z must act on the z-eigenbasis
    rng = np.random.default_rng(seed)
    letters = "".join(rng.choice(list("IXYZ"), 3))
    hi = Spin(0.5, N=3)
    op = PauliStrings(hi, letters)
    expect = kron_chain(3, {i: {"X": SX, "Y": SY, "Z": SZ}[c]
                            for i, c in enumerate(letters) if c != "I"})
    assert np.allclose(op.to_dense(), expect)


def test_operator_linearity():
    hi = Spin(0.5, N=2)
    a = sigmax(hi, 0) @ sigmax(hi, 1)
    b = sigmaz(hi, 0)
    lhs = (2.0 * a - 0.5j * b).to_dense()
    assert np.allclose(lhs, 2.0 * a.to_dense() - 0.5j * b.to_dense())


def test_fock_ladder_blocks():
    hi = Fock(n_max=2, N=1)
    n_op = LocalOperator(hi, np.diag([0.0, 1.0, 2.0]), (0,))
    assert np.allclose(np.diag(n_op.to_dense()).real, [0, 1, 2])


# -- fermions -----------------------------------------------------------


def test_anticommutators_six_orbitals():
    hi = SpinOrbitalFermions(6)
    eye = np.eye(2**6)
    for i in range(6):
        for j in range(6):
            fi = FermionOperator2nd(hi, f"{i}").to_dense()
            fjd = FermionOperator2nd(hi, f"{j}^").to_dense()
            anti = fi @ fjd + fjd @ fi
            assert np.allclose(anti, (i == j) * eye), (i, j)


def test_fermion_number_operator():
    hi = SpinOrbitalFermions(3)
    n1 = FermionOperator2nd(hi, "1^ 1").to_dense()
    states = hi.all_states()
    assert np.allclose(np.diag(n1).real, states[:, 1])


def test_jordan_wigner_matches_dense():
    hi = SpinOrbitalFermions(4)
    op = FermionOperator2nd(hi, ["0^ 2", "2^ 0", "1^ 1"], [0.7, 0.7, 1.1])
    jw = jordan_wigner(op)
    assert np.allclose(op.to_dense(), jw.to_dense())


def test_jordan_wigner_retarget_size_check():
    hi = SpinOrbitalFermions(3)
    op = FermionOperator2nd(hi, "0^ 1")
    q = Qubit(3)
    assert jordan_wigner(op, q).hilbert == q
    with pytest.raises(ValueError):
        jordan_wigner(op, Qubit(4))


def test_fermion_hermiticity_of_hopping():
    hi = SpinOrbitalFermions(4)
    hop = FermionOperator2nd(hi, ["0^ 1", "1^ 0"], [-1.0, -1.0])
    dense = hop.to_dense()
    assert np.allclose(dense, dense.conj().T)


# -- local estimators ---------------------------------------------------


def _random_rbm_logpsi(hi, seed):
    rng = np.random.default_rng(seed)
    W = 0.3 * (rng.standard_normal((hi.size, hi.size)))

    def log_amp(x):
        x = np.atleast_2d(x)
        return np.einsum("bi,ij,bj->b", x, W, x) + 0j

    return log_amp


def test_local_values_match_dense_estimator():
    hi = Spin(0.5, N=4)
    g = lattice.chain(4, pbc=True)
    op = ising(hi, g, h=0.8)
    log_amp = _random_rbm_logpsi(hi, 3)
    states = hi.all_states()
    vals = local_values(op, log_amp, states)
    psi = np.exp(log_amp(states))
    expect = (op.to_dense() @ psi) / psi
    assert np.allclose(vals, expect)


def test_local_values_chunking_identical():
    hi = Spin(0.5, N=4)
    g = lattice.chain(4, pbc=True)
    op = heisenberg(hi, g)
    log_amp = _random_rbm_logpsi(hi, 4)
    states = hi.all_states()
    a = local_values(op, log_amp, states)
    b = local_values(op, log_amp, states, chunk_size=3)
    assert np.array_equal(a, b)


def test_local_values_repeated_rows():
    hi = Spin(0.5, N=3)
    g = lattice.chain(3, pbc=True)
    op = ising(hi, g, h=1.0)
    log_amp = _random_rbm_logpsi(hi, 5)
    samples = hi.random_state(RngKey(0), 50)
    vals = local_values(op, log_amp, samples)
    # identical configurations must give identical estimators
    key = [tuple(r) for r in samples]
    seen = {}
    for k, v in zip(key, vals):
        assert np.isclose(seen.setdefault(k, v), v)
