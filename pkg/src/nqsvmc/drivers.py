"""Variational states, estimator statistics, and the VMC / TDVP drivers.

A variational state bundles a model, its parameters, and a sampling
strategy. ``MCState`` estimates expectations from Markov chain samples;
``FullSumState`` sums over the whole enumerated space and turns every
estimator into an exact deterministic quantity, which is what all oracle
comparisons use.

Force and gradient conventions: the force is the covariance
f_i = E[O_i* (A - E[A])]. The gradient handed to optimizers is 2 Re f for
real parameters, f itself for holomorphic complex parameters, and 2 f for
complex parameters treated as real pairs.

TDVP integrates G theta-dot = gamma * grad with gamma = -i (real time) or
-1 (imaginary time); a single Euler step of imaginary time reproduces one
SR step with learning rate dt.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .operator import ContinuousOperator, local_values
from .paramtree import flatten, spec_of, tree_map, unflatten
from .qgt import QGTJacobian, QGTOnTheFly, infer_mode
from .rng import as_key

__all__ = [
    "Stats",
    "MCState",
    "FullSumState",
    "Sgd",
    "SR",
    "VMC",
    "RunLog",
    "Tableau",
    "Euler",
    "Heun",
    "RK23",
    "RK45",
    "Integrator",
    "step_controller",
    "TDVP",
]


# -- statistics ---------------------------------------------------------


@dataclass(frozen=True)
class Stats:
    mean: complex
    error_of_mean: float
    variance: float
    n_samples: int

    def __repr__(self):
        return (
            f"{self.mean.real:.6f}{self.mean.imag:+.6f}j "
            f"± {self.error_of_mean:.2e} [var={self.variance:.4f}, "
            f"n={self.n_samples}]"
        )


def mc_statistics(values: np.ndarray) -> Stats:
    """Batch-means statistics from per-chain estimator values (C, per)."""
    values = np.atleast_2d(values)
    C, per = values.shape
    mean = complex(values.mean())
    var = float(np.mean(np.abs(values - mean) ** 2))
    if C > 1:
        # np.var of complex data is E|z - mean(z)|^2, covering both parts
        err = float(np.sqrt(np.var(values.mean(axis=1), ddof=1) / C))
    else:
        err = math.sqrt(var / (C * per))
    return Stats(mean, err, var, C * per)


def full_sum_statistics(values: np.ndarray, weights: np.ndarray) -> Stats:
    mean = complex(weights @ values)
    var = float(weights @ np.abs(values - mean) ** 2)
    return Stats(mean, 0.0, var, len(values))


def pack_gradient(model, force_tree):
    """Map the raw force covariance to the optimizer-facing gradient."""
    mode = infer_mode(model)
    if mode == "real":
        return tree_map(lambda l: 2.0 * l.real, force_tree)
    if mode == "complex":
        return tree_map(lambda l: 2.0 * l, force_tree)
    return force_tree


# -- variational states -------------------------------------------------


class _StateBase:
    def __init__(self, model, params, chunk_size):
        self._model = model
        self._params = params
        self._spec = spec_of(params)
        self.chunk_size = chunk_size

    @property
    def model(self):
        return self._model

    @property
    def params(self):
        return self._params

    @params.setter
    def params(self, tree):
        new_spec = spec_of(tree)
        if new_spec.entries != self._spec.entries:
            raise ValueError("parameter tree structure changed")
        self._params = tree
        self._spec = new_spec
        self._invalidate()

    @property
    def spec(self):
        return self._spec

    def log_amp(self, x):
        return self._model.apply_chunked(self._params, x, self.chunk_size)

    def _invalidate(self):
        raise NotImplementedError


class MCState(_StateBase):
    """Monte Carlo variational state: samples are drawn lazily and cached
    until the parameters change."""

    def __init__(self, sampler, model, n_samples: int = 1024, seed=0,
                 params=None, chunk_size: int | None = None):
        key = as_key(seed)
        k_par, k_smp = key.split(2)
        if params is None:
            params = model.init_params(k_par)
        super().__init__(model, params, chunk_size)
        self.sampler = sampler
        self.n_samples = int(n_samples)
        sampler.reset(k_smp)
        self._samples = None

    def _invalidate(self):
        self._samples = None

    def reset_samples(self):
        self._samples = None

    @property
    def samples(self) -> np.ndarray:
        """Shape (chains, per_chain, N)."""
        if self._samples is None:
            self._samples = self.sampler.sample(
                self._model, self._params, self.n_samples, self.chunk_size
            )
        return self._samples

    @property
    def flat_samples(self) -> np.ndarray:
        s = self.samples
        return s.reshape(-1, s.shape[-1])

    def _locals(self, op) -> np.ndarray:
        if isinstance(op, ContinuousOperator):
            return op.local_energies(self._model, self._params, self.flat_samples)
        return local_values(op, self.log_amp, self.flat_samples, self.chunk_size)

    def expect(self, op) -> Stats:
        vals = self._locals(op)
        C = self.samples.shape[0]
        return mc_statistics(vals.reshape(C, -1))

    def force(self, op):
        """Raw force covariance f_i = E[O_i* (A - <A>)], unpacked."""
        vals = self._locals(op)
        C = self.samples.shape[0]
        stats = mc_statistics(vals.reshape(C, -1))
        cot = np.conj(vals - stats.mean) / len(vals)
        f = tree_map(np.conj, self._model.vjp(self._params, self.flat_samples, cot))
        return stats, f

    def expect_and_grad(self, op):
        stats, f = self.force(op)
        return stats, pack_gradient(self._model, f)

    def qgt(self, impl: str = "jacobian", diag_shift: float = 0.0, mode=None):
        cls = QGTJacobian if impl == "jacobian" else QGTOnTheFly
        return cls(self._model, self._params, self.flat_samples,
                   mode=mode, diag_shift=diag_shift)


class FullSumState(_StateBase):
    """Exact-summation state over an enumerable space."""

    def __init__(self, model, hilbert, seed=0, params=None,
                 chunk_size: int | None = None):
        if params is None:
            params = model.init_params(as_key(seed))
        super().__init__(model, params, chunk_size)
        self.hilbert = hilbert
        self._states = hilbert.all_states()
        self._weights = None

    def _invalidate(self):
        self._weights = None

    @property
    def flat_samples(self) -> np.ndarray:
        return self._states

    @property
    def weights(self) -> np.ndarray:
        """Born probabilities of the current parameters."""
        if self._weights is None:
            logs = self.log_amp(self._states)
            w = np.exp(2.0 * (logs.real - logs.real.max()))
            self._weights = w / w.sum()
        return self._weights

    def _locals(self, op) -> np.ndarray:
        if isinstance(op, ContinuousOperator):
            raise TypeError("continuous spaces cannot be summed exactly")
        return local_values(op, self.log_amp, self._states, self.chunk_size)

    def expect(self, op) -> Stats:
        return full_sum_statistics(self._locals(op), self.weights)

    def force(self, op):
        vals = self._locals(op)
        stats = full_sum_statistics(vals, self.weights)
        cot = self.weights * np.conj(vals - stats.mean)
        f = tree_map(np.conj, self._model.vjp(self._params, self._states, cot))
        return stats, f

    def expect_and_grad(self, op):
        stats, f = self.force(op)
        return stats, pack_gradient(self._model, f)

    def qgt(self, impl: str = "jacobian", diag_shift: float = 0.0, mode=None):
        cls = QGTJacobian if impl == "jacobian" else QGTOnTheFly
        return cls(self._model, self._params, self._states,
                   weights=self.weights, mode=mode, diag_shift=diag_shift)


# -- optimizer and preconditioner --------------------------------------


class Sgd:
    def __init__(self, learning_rate: float):
        if learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        self.learning_rate = float(learning_rate)

    def update(self, params, grad):
        eta = self.learning_rate

        def leaf(p, g):
            return (p - eta * np.asarray(g).astype(p.dtype, copy=False)).astype(p.dtype)

        return tree_map(leaf, params, grad)


class SR:
    """Stochastic reconfiguration: precondition the gradient by solving
    (G + eps) delta = grad on the state's current samples."""

    def __init__(self, diag_shift: float = 0.01, impl: str = "jacobian",
                 solver: str = "cg", mode=None, rtol: float = 1e-8,
                 rcond: float = 1e-12, maxiter=None, warm_start: bool = True):
        self.diag_shift = diag_shift
        self.impl = impl
        self.solver = solver
        self.mode = mode
        self.rtol = rtol
        self.rcond = rcond
        self.maxiter = maxiter
        self.warm_start = warm_start
        self._x0 = None
        self.last_info: dict = {}

    def __call__(self, state, grad):
        G = state.qgt(self.impl, self.diag_shift, self.mode)
        b = G.pack(grad)
        x0 = None
        if self.warm_start and self._x0 is not None and self._x0.shape == b.shape:
            x0 = self._x0
        x, info = G.solve(b, method=self.solver, x0=x0, rtol=self.rtol,
                          rcond=self.rcond, maxiter=self.maxiter)
        self.last_info = info
        self._x0 = x
        return G.unpack(x)


# -- run logging --------------------------------------------------------


class RunLog:
    """Accumulates per-step statistics; serializable as JSON with the
    layout data[name]["Mean"]["real"]."""

    def __init__(self, axis: str = "iters"):
        self.axis = axis
        self._axis_vals: list[float] = []
        self._series: dict[str, dict] = {}
        self._extra: dict[str, list] = {}

    def append(self, axis_value, estimates: dict, extra: dict | None = None):
        self._axis_vals.append(axis_value)
        for name, st in estimates.items():
            slot = self._series.setdefault(
                name,
                {"Mean": {"real": [], "imag": []}, "Sigma": [], "Variance": []},
            )
            slot["Mean"]["real"].append(float(np.real(st.mean)))
            slot["Mean"]["imag"].append(float(np.imag(st.mean)))
            slot["Sigma"].append(float(st.error_of_mean))
            slot["Variance"].append(float(st.variance))
        for k, v in (extra or {}).items():
            self._extra.setdefault(k, []).append(v)

    def __len__(self):
        return len(self._axis_vals)

    def __getitem__(self, name):
        return self._series[name]

    @property
    def data(self) -> dict:
        out: dict = {self.axis: list(self._axis_vals)}
        out.update(self._series)
        out.update(self._extra)
        return out

    def write(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.data, f, indent=1)
            f.write("\n")


def _require_finite(params, where: str):
    vec, _ = flatten(params)
    if not np.all(np.isfinite(vec)):
        raise FloatingPointError(f"non-finite parameters {where}")


# -- VMC driver ---------------------------------------------------------


class VMC:
    def __init__(self, hamiltonian, optimizer, variational_state,
                 preconditioner=None):
        self.hamiltonian = hamiltonian
        self.optimizer = optimizer
        self.state = variational_state
        self.preconditioner = preconditioner

    def run(self, n_iter: int, out=None, obs: dict | None = None,
            callback=None) -> RunLog:
        log = RunLog("iters")
        vs = self.state
        for i in range(int(n_iter)):
            stats, grad = vs.expect_and_grad(self.hamiltonian)
            delta = self.preconditioner(vs, grad) if self.preconditioner else grad
            estimates = {"Energy": stats}
            for name, op in (obs or {}).items():
                estimates[name] = vs.expect(op)
            extra = {}
            acc = getattr(getattr(vs, "sampler", None), "acceptance", None)
            if acc is not None and not math.isnan(acc):
                extra["Acceptance"] = float(acc)
            log.append(i, estimates, extra)
            vs.params = self.optimizer.update(vs.params, delta)
            _require_finite(vs.params, f"after iteration {i}")
            if callback is not None and callback(i, log, vs) is False:
                break
        if out is not None:
            log.write(f"{out}.log")
        return log


# -- Runge-Kutta integrators -------------------------------------------


@dataclass(frozen=True)
class Tableau:
    name: str
    order: int
    a: tuple
    b: tuple
    c: tuple
    b_err: tuple | None  # b - b_hat of the embedded lower-order scheme


EULER_TABLEAU = Tableau("euler", 1, ((),), (1.0,), (0.0,), None)

HEUN_TABLEAU = Tableau(
    "heun", 2,
    ((), (1.0,)),
    (0.5, 0.5),
    (0.0, 1.0),
    (-0.5, 0.5),
)

BOGACKI_SHAMPINE_TABLEAU = Tableau(
    "bogacki-shampine", 3,
    ((), (1 / 2,), (0.0, 3 / 4), (2 / 9, 1 / 3, 4 / 9)),
    (2 / 9, 1 / 3, 4 / 9, 0.0),
    (0.0, 1 / 2, 3 / 4, 1.0),
    (2 / 9 - 7 / 24, 1 / 3 - 1 / 4, 4 / 9 - 1 / 3, -1 / 8),
)

DORMAND_PRINCE_TABLEAU = Tableau(
    "dormand-prince", 5,
    (
        (),
        (1 / 5,),
        (3 / 40, 9 / 40),
        (44 / 45, -56 / 15, 32 / 9),
        (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
        (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
        (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
    ),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0),
    (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0),
    (
        35 / 384 - 5179 / 57600,
        0.0,
        500 / 1113 - 7571 / 16695,
        125 / 192 - 393 / 640,
        -2187 / 6784 + 92097 / 339200,
        11 / 84 - 187 / 2100,
        -1 / 40,
    ),
)


def step_controller(e: float, dt: float) -> tuple[bool, float]:
    """Scaled-error acceptance and the next step size."""
    factor = 5.0 if e == 0 else min(max(0.9 * e ** (-1 / 5), 0.2), 5.0)
    return e <= 1.0, dt * factor


class Integrator:
    """Explicit Runge-Kutta stepping on flat state vectors.

    Adaptive schemes scale the embedded error by atol + rtol * |y| using
    either the euclidean norm or a caller-provided one (the QGT-induced
    metric during TDVP) and re-try rejected steps with the shrunken dt.
    """

    def __init__(self, tableau: Tableau, dt: float, adaptive: bool = False,
                 atol: float = 1e-6, rtol: float = 1e-6,
                 norm: str = "euclidean"):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if adaptive and tableau.b_err is None:
            raise ValueError(f"{tableau.name} has no embedded error estimate")
        if norm not in ("euclidean", "qgt"):
            raise ValueError(f"unknown norm {norm!r}")
        self.tableau = tableau
        self.dt = float(dt)
        self.adaptive = adaptive
        self.atol = float(atol)
        self.rtol = float(rtol)
        self.norm = norm

    def _stages(self, rhs, t, y, dt):
        tab = self.tableau
        ks = []
        for l in range(len(tab.b)):
            yl = y
            for m, alm in enumerate(tab.a[l]):
                if alm != 0.0:
                    yl = yl + dt * alm * ks[m]
            ks.append(rhs(t + tab.c[l] * dt, yl))
        ynew = y
        for l, bl in enumerate(tab.b):
            if bl != 0.0:
                ynew = ynew + dt * bl * ks[l]
        err = None
        if tab.b_err is not None:
            err = np.zeros_like(y)
            for l, el in enumerate(tab.b_err):
                if el != 0.0:
                    err = err + dt * el * ks[l]
        return ynew, err

    def step(self, rhs, t: float, y: np.ndarray, norm_fn=None):
        """One (possibly retried) step; returns (t', y', info)."""
        nrm = norm_fn if (norm_fn is not None and self.norm == "qgt") else (
            lambda v: float(np.linalg.norm(v))
        )
        dt = self.dt
        if not self.adaptive:
            ynew, _ = self._stages(rhs, t, y, dt)
            return t + dt, ynew, {"dt": dt, "error": 0.0, "retries": 0}
        for attempt in range(50):
            ynew, err = self._stages(rhs, t, y, dt)
            scale = self.atol + self.rtol * nrm(y)
            e = nrm(err) / scale
            if not math.isfinite(e):
                raise FloatingPointError("non-finite integrator error estimate")
            accept, dt_next = step_controller(e, dt)
            if accept:
                self.dt = dt_next
                return t + dt, ynew, {"dt": dt, "error": e, "retries": attempt}
            dt = dt_next
        raise FloatingPointError("step size control failed to find an acceptable dt")


def Euler(dt: float) -> Integrator:
    return Integrator(EULER_TABLEAU, dt)


def Heun(dt: float) -> Integrator:
    return Integrator(HEUN_TABLEAU, dt)


def RK23(dt: float, adaptive: bool = True, atol: float = 1e-6,
         rtol: float = 1e-6, norm: str = "euclidean") -> Integrator:
    return Integrator(BOGACKI_SHAMPINE_TABLEAU, dt, adaptive, atol, rtol, norm)


def RK45(dt: float, adaptive: bool = True, atol: float = 1e-6,
         rtol: float = 1e-6, norm: str = "euclidean") -> Integrator:
    return Integrator(DORMAND_PRINCE_TABLEAU, dt, adaptive, atol, rtol, norm)


# -- TDVP driver --------------------------------------------------------


class TDVP:
    """Projected time evolution: solve G theta-dot = gamma * grad each
    stage and advance parameters with the configured integrator.

    propagation "real" (gamma = -i) follows the Schroedinger equation;
    "imag" (gamma = -1) flows toward the ground state. The real-parameter
    real-time variant takes real parts of the same system and is
    experimental.
    """

    def __init__(self, hamiltonian, variational_state, integrator,
                 propagation: str = "real", qgt_impl: str = "jacobian",
                 solver: str = "svd", diag_shift: float = 0.0, mode=None,
                 rcond: float = 1e-12, rtol: float = 1e-8):
        if propagation not in ("real", "imag"):
            raise ValueError("propagation must be 'real' or 'imag'")
        self.hamiltonian = hamiltonian
        self.state = variational_state
        self.integrator = integrator
        self.gamma = -1j if propagation == "real" else -1.0
        self.propagation = propagation
        self.qgt_impl = qgt_impl
        self.solver = solver
        self.diag_shift = diag_shift
        self.mode = mode
        self.rcond = rcond
        self.rtol = rtol
        self._last_qgt = None
        self.last_stats: Stats | None = None

    def _set_vec(self, vec):
        self.state.params = unflatten(self.state.spec, vec)

    def rhs(self, t: float, vec: np.ndarray) -> np.ndarray:
        vs = self.state
        self._set_vec(vec)
        stats, f = vs.force(self.hamiltonian)
        self.last_stats = stats
        G = vs.qgt(self.qgt_impl, self.diag_shift, self.mode)
        self._last_qgt = G
        # real and split parameter handling carry the real-pair gradient
        # factor 2, keeping one Euler imaginary-time step identical to SR
        fac = self.gamma if infer_mode(vs.model) == "holomorphic" else 2.0 * self.gamma
        rhs_tree = tree_map(lambda l: fac * l, f)
        theta_dot, _ = G.solve(rhs_tree, method=self.solver,
                               rcond=self.rcond, rtol=self.rtol)
        vec_dot, _ = flatten(theta_dot)
        if not np.all(np.isfinite(vec_dot)):
            raise FloatingPointError(f"non-finite equation of motion at t={t}")
        return vec_dot

    def _qgt_norm(self, v: np.ndarray) -> float:
        if self._last_qgt is None:
            return float(np.linalg.norm(v))
        Gv = self._last_qgt.matvec(v)
        val = np.real(np.vdot(v, Gv))
        return float(np.sqrt(max(val, 0.0)))

    def run(self, T: float, out=None, obs: dict | None = None,
            callback=None, t0: float = 0.0, max_steps: int = 10**6) -> RunLog:
        log = RunLog("times")
        vs = self.state
        t = float(t0)
        vec, _ = flatten(vs.params)
        end = float(T) + t0

        def record(time):
            estimates = {"Energy": vs.expect(self.hamiltonian)}
            for name, op in (obs or {}).items():
                estimates[name] = vs.expect(op)
            return estimates

        log.append(t, record(t), {"dt": self.integrator.dt})
        steps = 0
        while t < end - 1e-12:
            self.integrator.dt = min(self.integrator.dt, end - t)
            t, vec, info = self.integrator.step(self.rhs, t, vec, self._qgt_norm)
            self._set_vec(vec)
            _require_finite(vs.params, f"at time {t}")
            log.append(t, record(t), {"dt": info["dt"]})
            steps += 1
            if steps >= max_steps:
                raise RuntimeError("maximum step count exceeded")
            if callback is not None and callback(t, log, vs) is False:
                break
        if out is not None:
            log.write(f"{out}.log")
        return log
