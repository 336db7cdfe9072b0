import copy
import json

import numpy as np
import pytest

from nqsvmc import lattice, oracle
from nqsvmc.drivers import (
    SR,
    TDVP,
    VMC,
    Euler,
    FullSumState,
    Heun,
    Integrator,
    MCState,
    RK23,
    RK45,
    RunLog,
    Sgd,
    Stats,
    full_sum_statistics,
    mc_statistics,
    pack_gradient,
    step_controller,
)
from nqsvmc.drivers import EULER_TABLEAU, HEUN_TABLEAU
from nqsvmc.hilbert import Spin
from nqsvmc.models import RBM, Model
from nqsvmc.operator import ising, sigmax, sigmaz
from nqsvmc.paramtree import flatten, tree_map
from nqsvmc.rng import RngKey
from nqsvmc.sampler import LocalRule, MetropolisSampler


def tfim_setup(L=3, h=1.0, seed=7, param_dtype=np.complex128):
    g = lattice.chain(L)
    hi = Spin(0.5, N=L)
    ham = ising(hi, g, h=h)
    model = RBM(hi, alpha=1, sigma=0.2, param_dtype=param_dtype)
    vs = FullSumState(model, hi, seed=seed)
    return hi, ham, model, vs


class OneParam(Model):
    """log psi = theta * x[:, 0] with a single scalar parameter."""

    def init_params(self, key):
        return {"theta": np.zeros((), dtype=self.param_dtype)}

    def log_amp(self, params, x):
        return (params["theta"] * np.atleast_2d(x)[:, 0]).astype(np.complex128)

    def log_grad(self, params, x):
        return {"theta": np.atleast_2d(x)[:, 0].astype(np.complex128)}

    def jvp(self, params, x, v):
        return v["theta"] * np.atleast_2d(x)[:, 0]

    def vjp(self, params, x, w):
        return {"theta": np.sum(w * np.atleast_2d(x)[:, 0])}


# -- statistics ---------------------------------------------------------


def test_mc_statistics_constant_values():
    st = mc_statistics(np.full((4, 8), 2.5))
    assert st.mean == 2.5 + 0j
    assert st.variance == 0.0
    assert st.error_of_mean == 0.0
    assert st.n_samples == 32


def test_mc_statistics_chain_spread():
    vals = np.stack([np.zeros(10), np.ones(10)])
    st = mc_statistics(vals)
    assert st.mean == pytest.approx(0.5)
    assert st.variance == pytest.approx(0.25)
    # two chain means 0 and 1: sample var 0.5, err = sqrt(0.5 / 2)
    assert st.error_of_mean == pytest.approx(0.5)


def test_mc_statistics_single_chain():
    gen = np.random.default_rng(0)
    vals = gen.standard_normal(400)
    st = mc_statistics(vals[None, :])
    assert st.error_of_mean == pytest.approx(np.sqrt(st.variance / 400))


def test_full_sum_statistics_weighted():
    vals = np.array([1.0, 3.0])
    w = np.array([0.75, 0.25])
    st = full_sum_statistics(vals, w)
    assert st.mean == pytest.approx(1.5)
    assert st.variance == pytest.approx(0.75 * 0.25 + 0.25 * 2.25)
    assert st.error_of_mean == 0.0


def test_stats_repr():
    s = Stats(1.0 + 0j, 0.01, 0.5, 100)
    assert "±" in repr(s) and "n=100" in repr(s)


def test_pack_gradient_by_mode():
    hi = Spin(0.5, N=2)
    f = {"W": np.array([[1.0 + 2.0j]])}
    holo = pack_gradient(RBM(hi), f)
    assert holo["W"][0, 0] == 1.0 + 2.0j
    split = pack_gradient(RBM(hi, holomorphic=False), f)
    assert split["W"][0, 0] == 2.0 + 4.0j
    real = pack_gradient(RBM(hi, param_dtype=np.float64), f)
    assert real["W"][0, 0] == 2.0


# -- variational states -------------------------------------------------


def test_full_sum_weights_are_born_probabilities():
    hi, ham, model, vs = tfim_setup()
    w = vs.weights
    psi = np.abs(np.exp(model.log_amp(vs.params, hi.all_states()))) ** 2
    np.testing.assert_allclose(w, psi / psi.sum(), atol=1e-14)
    assert w.sum() == pytest.approx(1.0)


def test_full_sum_expect_is_rayleigh_quotient():
    hi, ham, model, vs = tfim_setup()
    psi = oracle.dense_model_state(model, vs.params, hi)
    H = ham.to_dense()
    expected = np.real(psi.conj() @ H @ psi)
    assert vs.expect(ham).mean.real == pytest.approx(expected, abs=1e-12)
    assert abs(vs.expect(ham).mean.imag) < 1e-12


def test_full_sum_gradient_matches_finite_differences():
    hi, ham, model, vs = tfim_setup()
    _, grad = vs.expect_and_grad(ham)
    gvec, _ = flatten(grad)
    vec, spec = flatten(vs.params)

    def energy(v):
        from nqsvmc.paramtree import unflatten

        psi = oracle.dense_model_state(model, unflatten(spec, v), hi)
        return np.real(psi.conj() @ ham.to_dense() @ psi)

    # dE along real and imaginary coordinate directions
    gen = np.random.default_rng(5)
    for i in gen.choice(vec.size, size=6, replace=False):
        for direction in (1.0, 1.0j):
            e = np.zeros_like(vec)
            e[i] = direction * 1e-6
            fd = (energy(vec + e) - energy(vec - e)) / 2e-6
            expected = 2 * np.real(np.conj(gvec[i]) * direction)
            assert fd == pytest.approx(expected, abs=1e-6)


def test_force_single_parameter_hand_value():
    hi = Spin(0.5, N=2)
    op = sigmaz(hi, 0)
    model = OneParam()
    vs = FullSumState(model, hi, params={"theta": np.array(0.0 + 0.0j)})
    stats, f = vs.force(op)
    # uniform state: <sz_0> = 0 and f = E[x_0 * x_0] = 1
    assert stats.mean == pytest.approx(0.0, abs=1e-14)
    assert f["theta"] == pytest.approx(1.0, abs=1e-14)
    real_model = OneParam(param_dtype=np.float64)
    vs_r = FullSumState(real_model, hi, params={"theta": np.array(0.0)})
    _, grad = vs_r.expect_and_grad(op)
    assert grad["theta"] == pytest.approx(2.0, abs=1e-14)


def test_params_setter_validates_structure():
    hi, ham, model, vs = tfim_setup()
    with pytest.raises(ValueError):
        vs.params = {"W": np.zeros((2, 2))}


def test_mc_state_caches_samples():
    hi = Spin(0.5, N=3)
    model = RBM(hi, sigma=0.1)
    sa = MetropolisSampler(hi, LocalRule(), n_chains=4)
    vs = MCState(sa, model, n_samples=64, seed=3)
    s1 = vs.samples
    assert s1 is vs.samples
    vs.params = tree_map(lambda l: l * 1.0, vs.params)
    s2 = vs.samples
    assert s2 is not s1
    assert vs.samples.shape == (4, 16, 3)
    assert vs.flat_samples.shape == (64, 3)


def test_mc_expect_consistent_with_full_sum():
    g = lattice.chain(4)
    hi = Spin(0.5, N=4)
    ham = ising(hi, g, h=1.0)
    model = RBM(hi, sigma=0.2)
    params = model.init_params(RngKey(11))
    sa = MetropolisSampler(hi, LocalRule(), n_chains=8)
    vs = MCState(sa, model, n_samples=2**12, seed=4, params=params)
    fs = FullSumState(model, hi, params=params)
    st = vs.expect(ham)
    exact = fs.expect(ham).mean.real
    assert abs(st.mean.real - exact) < 5 * st.error_of_mean + 1e-12


# -- optimizer and preconditioner --------------------------------------


def test_sgd_update():
    opt = Sgd(0.1)
    params = {"a": np.array([1.0, 2.0])}
    new = opt.update(params, {"a": np.array([1.0, -1.0])})
    np.testing.assert_allclose(new["a"], [0.9, 2.1])
    assert new["a"].dtype == np.float64
    with pytest.raises(ValueError):
        Sgd(0.0)


def test_sr_is_identity_solve_on_toy():
    hi = Spin(0.5, N=2)
    op = sigmaz(hi, 0)
    vs = FullSumState(OneParam(), hi, params={"theta": np.array(0.0 + 0.0j)})
    _, grad = vs.expect_and_grad(op)
    sr = SR(diag_shift=0.25, solver="cholesky")
    delta = sr(vs, grad)
    # G = 1, so the preconditioned step is grad / (1 + shift)
    assert delta["theta"] == pytest.approx(grad["theta"] / 1.25, abs=1e-12)
    assert sr.last_info["converged"]


def test_sr_warm_start_reuses_solution():
    hi, ham, model, vs = tfim_setup()
    _, grad = vs.expect_and_grad(ham)
    sr = SR(diag_shift=0.01, solver="cg")
    sr(vs, grad)
    assert sr._x0 is not None
    again = sr(vs, grad)
    gvec, _ = flatten(again)
    assert np.all(np.isfinite(gvec))


# -- run log ------------------------------------------------------------


def test_runlog_layout_and_write(tmp_path):
    log = RunLog("iters")
    log.append(0, {"Energy": Stats(1.5 + 0.5j, 0.1, 2.0, 64)}, {"Acceptance": 0.6})
    log.append(1, {"Energy": Stats(1.0 + 0j, 0.1, 1.0, 64)}, {"Acceptance": 0.7})
    assert len(log) == 2
    assert log["Energy"]["Mean"]["real"] == [1.5, 1.0]
    assert log["Energy"]["Mean"]["imag"] == [0.5, 0.0]
    assert log["Energy"]["Sigma"] == [0.1, 0.1]
    log.write(tmp_path / "run.log")
    data = json.loads((tmp_path / "run.log").read_text())
    assert data["iters"] == [0, 1]
    assert data["Energy"]["Variance"] == [2.0, 1.0]
    assert data["Acceptance"] == [0.6, 0.7]


# -- VMC ----------------------------------------------------------------


def test_vmc_lowers_full_sum_energy():
    hi, ham, model, vs = tfim_setup(L=4)
    drv = VMC(ham, Sgd(0.05), vs, preconditioner=SR(0.01, solver="cholesky"))
    log = drv.run(40)
    e = log["Energy"]["Mean"]["real"]
    assert len(e) == 40
    assert e[-1] < e[0]
    e0, _ = oracle.ed_spectrum(ham, k=1)
    assert e[-1] >= e0[0] - 1e-10


def test_vmc_records_observables_and_acceptance():
    hi = Spin(0.5, N=3)
    g = lattice.chain(3)
    ham = ising(hi, g, h=1.0)
    model = RBM(hi, sigma=0.1)
    sa = MetropolisSampler(hi, LocalRule(), n_chains=4)
    vs = MCState(sa, model, n_samples=256, seed=2)
    sx = sigmax(hi, 0) + sigmax(hi, 1) + sigmax(hi, 2)
    log = VMC(ham, Sgd(0.01), vs).run(3, obs={"Sx": sx})
    assert len(log["Sx"]["Mean"]["real"]) == 3
    assert all(0.0 < a <= 1.0 for a in log.data["Acceptance"])


def test_vmc_callback_stops_early():
    hi, ham, model, vs = tfim_setup()
    log = VMC(ham, Sgd(0.01), vs).run(50, callback=lambda i, lg, st: i < 4)
    assert len(log) == 5


def test_vmc_aborts_on_nonfinite_parameters():
    hi, ham, model, vs = tfim_setup()
    vs.params = tree_map(lambda l: l * np.nan, vs.params)
    with pytest.raises(FloatingPointError):
        VMC(ham, Sgd(0.01), vs).run(1)


def test_vmc_writes_log_file(tmp_path):
    hi, ham, model, vs = tfim_setup()
    out = tmp_path / "run"
    VMC(ham, Sgd(0.01), vs).run(2, out=str(out))
    data = json.loads((tmp_path / "run.log").read_text())
    assert len(data["Energy"]["Mean"]["real"]) == 2


# -- integrators --------------------------------------------------------


def test_euler_exact_for_constant_rhs():
    integ = Euler(0.1)
    t, y = 0.0, np.array([1.0])
    for _ in range(10):
        t, y, _ = integ.step(lambda tt, yy: np.array([2.0]), t, y)
    assert t == pytest.approx(1.0)
    assert y[0] == pytest.approx(3.0, abs=1e-14)


def test_heun_exact_for_linear_time_rhs():
    # y' = t integrates exactly at order 2
    integ = Heun(0.25)
    t, y = 0.0, np.array([0.0])
    for _ in range(4):
        t, y, _ = integ.step(lambda tt, yy: np.array([tt]), t, y)
    assert y[0] == pytest.approx(0.5, abs=1e-14)


def exp_decay_error(integ, n_steps):
    t, y = 0.0, np.array([1.0 + 0j])
    for _ in range(n_steps):
        t, y, _ = integ.step(lambda tt, yy: -yy, t, y)
    return abs(y[0] - np.exp(-t))


def test_integrator_orders_on_exponential():
    assert exp_decay_error(Euler(0.01), 100) < 2e-2
    assert exp_decay_error(Heun(0.01), 100) < 1e-5
    assert exp_decay_error(RK23(0.01, adaptive=False), 100) < 5e-8
    assert exp_decay_error(RK45(0.01, adaptive=False), 100) < 1e-12


def test_heun_halving_quarters_error():
    e1 = exp_decay_error(Heun(0.02), 50)
    e2 = exp_decay_error(Heun(0.01), 100)
    assert e1 / e2 == pytest.approx(4.0, rel=0.1)


def test_step_controller_formulas():
    accept, dt = step_controller(0.0, 0.1)
    assert accept and dt == pytest.approx(0.5)
    accept, dt = step_controller(1.0, 0.1)
    assert accept and dt == pytest.approx(0.09)
    accept, dt = step_controller(32.0, 0.1)
    assert not accept and dt == pytest.approx(0.1 * 0.9 * 32 ** (-0.2))
    accept, dt = step_controller(1e12, 0.1)
    assert not accept and dt == pytest.approx(0.02)
    accept, dt = step_controller(1e-12, 0.1)
    assert accept and dt == pytest.approx(0.5)


def test_adaptive_rk45_tracks_tolerance():
    integ = RK45(0.05, adaptive=True, atol=1e-8, rtol=1e-8)
    t, y = 0.0, np.array([1.0])
    while t < 1.0 - 1e-12:
        integ.dt = min(integ.dt, 1.0 - t)
        t, y, info = integ.step(lambda tt, yy: -yy, t, y)
        assert info["error"] <= 1.0
    assert abs(y[0] - np.exp(-1.0)) < 1e-6


def test_adaptive_needs_error_estimate():
    with pytest.raises(ValueError):
        Integrator(EULER_TABLEAU, 0.1, adaptive=True)
    with pytest.raises(ValueError):
        Integrator(HEUN_TABLEAU, 0.0)
    with pytest.raises(ValueError):
        Integrator(HEUN_TABLEAU, 0.1, norm="manhattan")


def test_adaptive_retries_rejected_steps():
    integ = RK23(10.0, adaptive=True, atol=1e-10, rtol=1e-10)
    t, y, info = integ.step(lambda tt, yy: -yy, 0.0, np.array([1.0]))
    assert info["retries"] > 0
    assert info["dt"] < 10.0


# -- TDVP ---------------------------------------------------------------


def test_euler_imaginary_time_equals_sr_step():
    hi, ham, model, vs1 = tfim_setup(L=3, seed=9)
    vs2 = FullSumState(model, hi, params=copy.deepcopy(vs1.params))
    VMC(ham, Sgd(0.05), vs1, preconditioner=SR(0.01, solver="cholesky")).run(1)
    drv = TDVP(ham, vs2, Euler(0.05), propagation="imag",
               solver="cholesky", diag_shift=0.01)
    drv.run(0.05)
    v1, _ = flatten(vs1.params)
    v2, _ = flatten(vs2.params)
    np.testing.assert_allclose(v2, v1, atol=1e-12)


def test_imaginary_time_lowers_energy():
    hi, ham, model, vs = tfim_setup(L=3, seed=1)
    drv = TDVP(ham, vs, Heun(0.05), propagation="imag",
               solver="svd", rcond=1e-10)
    log = drv.run(1.0)
    e = log["Energy"]["Mean"]["real"]
    assert e[-1] < e[0]
    assert log.axis == "times"
    assert log.data["times"][0] == 0.0
    assert log.data["times"][-1] == pytest.approx(1.0)


def test_real_time_conserves_energy():
    hi, ham, model, vs = tfim_setup(L=3, seed=2)
    e_before = vs.expect(ham).mean.real
    drv = TDVP(ham, vs, Heun(0.005), propagation="real",
               solver="svd", rcond=1e-10)
    log = drv.run(0.1)
    e = log["Energy"]["Mean"]["real"]
    assert abs(e[-1] - e_before) < 1e-4 * abs(e_before)


def test_tdvp_qgt_norm_runs():
    hi, ham, model, vs = tfim_setup(L=3, seed=3)
    integ = RK45(0.05, adaptive=True, atol=1e-5, rtol=1e-5, norm="qgt")
    log = TDVP(ham, vs, integ, propagation="imag", solver="svd").run(0.1)
    assert log.data["times"][-1] == pytest.approx(0.1)


def test_tdvp_rejects_unknown_propagation():
    hi, ham, model, vs = tfim_setup()
    with pytest.raises(ValueError):
        TDVP(ham, vs, Euler(0.01), propagation="sideways")
