"""Batch front end: config-driven runs with JSON logs and snapshots.

Subcommands
  vmc        ground-state optimisation
  tdvp       real- or imaginary-time propagation
  ed         exact diagonalisation of the configured Hamiltonian
  sample     draw raw configurations and dump them as CSV
  chartable  print character tables

Configs are TOML with a ``schema = 1`` version key; unknown keys are
rejected up front. ``--override dotted.key=value`` patches the parsed
config, so sweeps do not need one file per run. The SEED environment
variable overrides the config seed; THREADS caps the BLAS/OpenMP pools
when exported before heavy kernels start (the console script does this).
Exit codes: 0 success, 2 config error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:
    import tomli

from . import lattice, operator, oracle, serialize, symmetry
from .drivers import (
    SR,
    TDVP,
    VMC,
    Euler,
    FullSumState,
    Heun,
    MCState,
    RK23,
    RK45,
    Sgd,
)
from .hilbert import Fock, Particle, Qubit, Spin
from .models import GCNN, RBM, Gaussian, Jastrow, RBMSymm
from .paramtree import tree_map
from .sampler import (
    ExactSampler,
    MetropolisExchange,
    MetropolisGaussian,
    MetropolisHamiltonian,
    MetropolisLocal,
)

__all__ = ["ConfigError", "main", "load_config"]


class ConfigError(ValueError):
    pass


# -- config plumbing ----------------------------------------------------

_MISSING = object()


def _typename(kind) -> str:
    names = {str: "string", bool: "bool", int: "integer", float: "number",
             dict: "table", list: "array"}
    return names.get(kind, kind.__name__)


def _get(table: dict, where: str, key: str, kind, default=_MISSING):
    if key not in table:
        if default is _MISSING:
            raise ConfigError(f"[{where}] missing required key '{key}'")
        return default
    val = table[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or (kind is int and isinstance(val, bool)):
        raise ConfigError(
            f"[{where}] key '{key}': expected {_typename(kind)}, "
            f"got {type(val).__name__}"
        )
    return val


def _choice(table: dict, where: str, key: str, options, default=_MISSING):
    val = _get(table, where, key, str, default)
    if val is not None and val not in options:
        raise ConfigError(
            f"[{where}] key '{key}': '{val}' is not one of {sorted(options)}"
        )
    return val


def _reject_unknown(table: dict, where: str, allowed) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(
                f"[{where}] unknown key '{key}'; allowed keys: "
                + ", ".join(sorted(allowed))
            )


def _table(cfg: dict, name: str, required: bool = True) -> dict:
    tab = cfg.get(name)
    if tab is None:
        if required:
            raise ConfigError(f"missing required table [{name}]")
        return {}
    if not isinstance(tab, dict):
        raise ConfigError(f"[{name}] must be a table")
    return tab


def parse_override(text: str):
    key, eq, raw = text.partition("=")
    key = key.strip()
    if not eq or not key:
        raise ConfigError(f"override '{text}' must look like dotted.key=value")
    try:
        val = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        val = raw.strip()
    return key, val


def apply_override(cfg: dict, key: str, val) -> None:
    parts = key.split(".")
    node = cfg
    for part in parts[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"override '{key}': '{part}' is not a table")
        node = nxt
    node[parts[-1]] = val


def load_config(path: str, overrides=()) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for text in overrides:
        key, val = parse_override(text)
        apply_override(cfg, key, val)
    if "SEED" in os.environ:
        try:
            cfg["seed"] = int(os.environ["SEED"])
        except ValueError:
            raise ConfigError(
                f"SEED environment variable {os.environ['SEED']!r} is not an integer"
            ) from None
    schema = _get(cfg, "config", "schema", int)
    if schema != 1:
        raise ConfigError(f"unsupported schema version {schema} (expected 1)")
    return cfg


_TOP_KEYS = {
    "schema", "seed", "out", "chunk_size",
    "system", "model", "sampler", "driver", "integrator", "observables",
    "ed", "chartable",
}


# -- builders -----------------------------------------------------------

_LATTICES = {
    "chain": lambda t: lattice.chain(
        _get(t, "system", "length", int), pbc=_get(t, "system", "pbc", bool, True)
    ),
    "square": lambda t: lattice.square(
        _get(t, "system", "length", int), pbc=_get(t, "system", "pbc", bool, True)
    ),
    "cube": lambda t: lattice.cube(
        _get(t, "system", "length", int), pbc=_get(t, "system", "pbc", bool, True)
    ),
    "triangular": lambda t: lattice.triangular(
        _get(t, "system", "extent", list), pbc=_get(t, "system", "pbc", bool, True)
    ),
    "honeycomb": lambda t: lattice.honeycomb(
        _get(t, "system", "extent", list), pbc=_get(t, "system", "pbc", bool, True)
    ),
}


def build_lattice(sys_t: dict):
    kind = _choice(sys_t, "system", "lattice", set(_LATTICES))
    return _LATTICES[kind](sys_t)


def build_system(cfg: dict):
    """Return (hilbert, graph-or-None, hamiltonian-or-None)."""
    sys_t = _table(cfg, "system")
    _reject_unknown(sys_t, "system", {
        "space", "lattice", "length", "extent", "pbc", "s", "total_sz",
        "n_max", "n_particles", "n", "box", "hamiltonian",
    })
    space = _choice(sys_t, "system", "space", {"spin", "qubit", "fock", "particle"})

    if space == "particle":
        n = _get(sys_t, "system", "n", int)
        box = _get(sys_t, "system", "box", list)
        pbc = _get(sys_t, "system", "pbc", bool, False)
        hil = Particle(n, L=tuple(float(b) for b in box), pbc=pbc)
        graph = None
    else:
        graph = build_lattice(sys_t)
        if space == "spin":
            hil = Spin(
                s=_get(sys_t, "system", "s", float, 0.5),
                N=graph.n_nodes,
                total_sz=_get(sys_t, "system", "total_sz", float, None),
            )
        elif space == "qubit":
            hil = Qubit(N=graph.n_nodes)
        else:
            hil = Fock(
                n_max=_get(sys_t, "system", "n_max", int),
                N=graph.n_nodes,
                n_particles=_get(sys_t, "system", "n_particles", int, None),
            )

    ham_t = sys_t.get("hamiltonian")
    ham = None
    if ham_t is not None:
        ham = build_hamiltonian(ham_t, space, hil, graph)
    return hil, graph, ham


def build_hamiltonian(ham_t: dict, space: str, hil, graph):
    _reject_unknown(ham_t, "system.hamiltonian", {"kind", "h", "J", "mass"})
    kind = _choice(ham_t, "system.hamiltonian", "kind",
                   {"ising", "heisenberg", "oscillator"})
    if kind == "oscillator":
        if space != "particle":
            raise ConfigError("[system.hamiltonian] oscillator needs space = 'particle'")
        mass = _get(ham_t, "system.hamiltonian", "mass", float, 1.0)
        kin = operator.KineticEnergy(hil, masses=mass)
        pot = operator.PotentialEnergy(hil, lambda r: 0.5 * float(r @ r))
        return kin + pot
    if space == "particle":
        raise ConfigError(f"[system.hamiltonian] '{kind}' needs a lattice system")
    if kind == "ising":
        return operator.ising(
            hil, graph,
            h=_get(ham_t, "system.hamiltonian", "h", float),
            J=_get(ham_t, "system.hamiltonian", "J", float, 1.0),
        )
    return operator.heisenberg(
        hil, graph, J=_get(ham_t, "system.hamiltonian", "J", float, 1.0)
    )


def _symmetry_group(name: str, graph):
    if graph is None:
        raise ConfigError("[model] symmetric models need a lattice system")
    if name == "translations":
        return symmetry.translation_group(graph)
    return symmetry.space_group(graph)


def build_model(cfg: dict, hil, graph):
    mod_t = _table(cfg, "model")
    _reject_unknown(mod_t, "model", {
        "kind", "alpha", "layers", "features", "param_dtype", "sigma", "symmetries",
    })
    kind = _choice(mod_t, "model", "kind",
                   {"jastrow", "rbm", "rbmsymm", "gcnn", "gaussian"})
    dtype = {"complex": np.complex128, "real": np.float64}[
        _choice(mod_t, "model", "param_dtype", {"complex", "real"}, "complex")
    ]
    sigma = _get(mod_t, "model", "sigma", float, 0.01)
    group_name = _choice(mod_t, "model", "symmetries",
                         {"translations", "space_group"}, "translations")
    if kind == "gaussian":
        if not isinstance(hil, Particle):
            raise ConfigError("[model] gaussian needs space = 'particle'")
        return Gaussian(hil, sigma=_get(mod_t, "model", "sigma", float, 1.0))
    if isinstance(hil, Particle):
        raise ConfigError(f"[model] '{kind}' works on discrete spaces only")
    if kind == "jastrow":
        return Jastrow(hil, param_dtype=dtype, sigma=sigma)
    if kind == "rbm":
        return RBM(hil, alpha=_get(mod_t, "model", "alpha", int, 1),
                   param_dtype=dtype, sigma=sigma)
    if kind == "rbmsymm":
        return RBMSymm(hil, _symmetry_group(group_name, graph),
                       alpha=_get(mod_t, "model", "alpha", int, 1),
                       param_dtype=dtype, sigma=sigma)
    return GCNN(hil, _symmetry_group(group_name, graph),
                layers=_get(mod_t, "model", "layers", int, 2),
                features=_get(mod_t, "model", "features", int, 2),
                param_dtype=dtype, sigma=sigma)


def build_state(cfg: dict, hil, graph, ham, model):
    smp_t = _table(cfg, "sampler")
    _reject_unknown(smp_t, "sampler", {
        "kind", "n_samples", "n_chains", "n_sweeps", "n_discard_per_chain",
        "d_max", "sigma", "log_correction",
    })
    kind = _choice(smp_t, "sampler", "kind",
                   {"local", "exchange", "hamiltonian", "gaussian", "exact", "full"})
    seed = _get(cfg, "config", "seed", int, 0)
    chunk = _get(cfg, "config", "chunk_size", int, None)

    if kind == "full":
        if isinstance(hil, Particle):
            raise ConfigError("[sampler] full summation needs a discrete space")
        return FullSumState(model, hil, seed=seed, chunk_size=chunk)

    n_samples = _get(smp_t, "sampler", "n_samples", int, 1024)
    if kind == "exact":
        smp = ExactSampler(hil)
    else:
        kw = {}
        for key in ("n_chains", "n_sweeps", "n_discard_per_chain"):
            val = _get(smp_t, "sampler", key, int, None)
            if val is not None:
                kw[key] = val
        if kind == "local":
            smp = MetropolisLocal(hil, **kw)
        elif kind == "exchange":
            if graph is None:
                raise ConfigError("[sampler] exchange moves need a lattice system")
            smp = MetropolisExchange(
                hil, graph, d_max=_get(smp_t, "sampler", "d_max", int, 1), **kw
            )
        elif kind == "hamiltonian":
            if ham is None:
                raise ConfigError("[sampler] hamiltonian moves need [system.hamiltonian]")
            smp = MetropolisHamiltonian(
                hil, ham,
                log_correction=_get(smp_t, "sampler", "log_correction", bool, True),
                **kw,
            )
        else:
            smp = MetropolisGaussian(
                hil, sigma=_get(smp_t, "sampler", "sigma", float, 1.0), **kw
            )
    return MCState(smp, model, n_samples=n_samples, seed=seed, chunk_size=chunk)


def build_observables(cfg: dict, hil) -> dict:
    obs_t = _table(cfg, "observables", required=False)
    _reject_unknown(obs_t, "observables", {"sx", "sz"})
    out = {}
    if _get(obs_t, "observables", "sx", bool, False):
        out["Sx"] = sum(operator.sigmax(hil, i) for i in range(hil.size))
    if _get(obs_t, "observables", "sz", bool, False):
        out["Sz"] = sum(operator.sigmaz(hil, i) for i in range(hil.size))
    return out


_INTEGRATORS = {"euler": Euler, "heun": Heun, "rk23": RK23, "rk45": RK45}


def build_integrator(cfg: dict):
    int_t = _table(cfg, "integrator")
    _reject_unknown(int_t, "integrator",
                    {"scheme", "dt", "adaptive", "atol", "rtol", "norm"})
    scheme = _choice(int_t, "integrator", "scheme", set(_INTEGRATORS), "heun")
    dt = _get(int_t, "integrator", "dt", float)
    if scheme in ("euler", "heun"):
        for key in ("adaptive", "atol", "rtol", "norm"):
            if key in int_t:
                raise ConfigError(f"[integrator] '{key}' applies to adaptive schemes only")
        return _INTEGRATORS[scheme](dt)
    return _INTEGRATORS[scheme](
        dt,
        adaptive=_get(int_t, "integrator", "adaptive", bool, True),
        atol=_get(int_t, "integrator", "atol", float, 1e-6),
        rtol=_get(int_t, "integrator", "rtol", float, 1e-6),
        norm=_choice(int_t, "integrator", "norm", {"euclidean", "qgt"}, "euclidean"),
    )


def _resolve_out(cfg: dict, args, required: bool = True):
    out = args.out or _get(cfg, "config", "out", str, None)
    if out is None and required:
        raise ConfigError("no output prefix: set 'out' in the config or pass --out")
    if out is not None:
        parent = os.path.dirname(out)
        if parent:
            os.makedirs(parent, exist_ok=True)
    return out


def _load_resume(path: str, state) -> None:
    loaded = serialize.load_params(path)
    serialize.check_compatible(loaded, state.params)

    def cast(new, ref):
        new = np.asarray(new)
        if np.issubdtype(new.dtype, np.complexfloating) and not np.issubdtype(
            ref.dtype, np.complexfloating
        ):
            new = new.real
        return new.astype(ref.dtype)

    state.params = tree_map(cast, loaded, state.params)


def write_csv(path: str, data: dict, axis: str) -> None:
    names = [k for k, v in data.items() if isinstance(v, dict)]
    header = [axis]
    cols = [data[axis]]
    for name in names:
        series = data[name]
        header += [f"{name}_re", f"{name}_im", f"{name}_sigma"]
        cols += [series["Mean"]["real"], series["Mean"]["imag"], series["Sigma"]]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(zip(*cols))


# -- subcommands --------------------------------------------------------


def cmd_vmc(cfg: dict, args) -> int:
    drv_t = _table(cfg, "driver")
    _reject_unknown(drv_t, "driver", {"n_iter", "learning_rate", "sr"})
    n_iter = _get(drv_t, "driver", "n_iter", int)
    eta = _get(drv_t, "driver", "learning_rate", float)

    hil, graph, ham = build_system(cfg)
    if ham is None:
        raise ConfigError("vmc needs a [system.hamiltonian] table")
    model = build_model(cfg, hil, graph)
    state = build_state(cfg, hil, graph, ham, model)
    if args.resume:
        _load_resume(args.resume, state)

    precond = None
    sr_t = drv_t.get("sr")
    if sr_t is not None:
        _reject_unknown(sr_t, "driver.sr", {
            "diag_shift", "solver", "impl", "mode", "rtol", "rcond", "maxiter",
        })
        precond = SR(
            diag_shift=_get(sr_t, "driver.sr", "diag_shift", float, 0.01),
            impl=_choice(sr_t, "driver.sr", "impl", {"jacobian", "onthefly"}, "jacobian"),
            solver=_choice(sr_t, "driver.sr", "solver", {"cg", "cholesky", "svd"}, "cg"),
            mode=_choice(sr_t, "driver.sr", "mode",
                         {"real", "holomorphic", "complex"}, None),
            rtol=_get(sr_t, "driver.sr", "rtol", float, 1e-8),
            rcond=_get(sr_t, "driver.sr", "rcond", float, 1e-12),
            maxiter=_get(sr_t, "driver.sr", "maxiter", int, None),
        )

    out = _resolve_out(cfg, args)
    driver = VMC(ham, Sgd(eta), state, preconditioner=precond)
    log = driver.run(n_iter, out=out, obs=build_observables(cfg, hil))
    serialize.save_params(f"{out}.params", state.params)
    if args.csv:
        write_csv(f"{out}.csv", log.data, "iters")

    if len(log):
        energy = log["Energy"]
        print(
            f"vmc: {len(log)} iterations, final Energy = "
            f"{energy['Mean']['real'][-1]:.8f} +/- {energy['Sigma'][-1]:.2e} "
            f"-> {out}.log"
        )
    else:
        # zero-iteration runs still snapshot the (possibly resumed) params
        print(f"vmc: 0 iterations -> {out}.params")
    return 0


def cmd_tdvp(cfg: dict, args) -> int:
    drv_t = _table(cfg, "driver")
    _reject_unknown(drv_t, "driver", {
        "t_end", "propagation", "solver", "impl", "mode", "diag_shift",
        "rcond", "rtol",
    })
    t_end = _get(drv_t, "driver", "t_end", float)

    hil, graph, ham = build_system(cfg)
    if ham is None:
        raise ConfigError("tdvp needs a [system.hamiltonian] table")
    model = build_model(cfg, hil, graph)
    state = build_state(cfg, hil, graph, ham, model)
    if args.resume:
        _load_resume(args.resume, state)

    driver = TDVP(
        ham, state, build_integrator(cfg),
        propagation=_choice(drv_t, "driver", "propagation", {"real", "imag"}, "real"),
        qgt_impl=_choice(drv_t, "driver", "impl", {"jacobian", "onthefly"}, "jacobian"),
        solver=_choice(drv_t, "driver", "solver", {"cg", "cholesky", "svd"}, "svd"),
        diag_shift=_get(drv_t, "driver", "diag_shift", float, 0.0),
        mode=_choice(drv_t, "driver", "mode", {"real", "holomorphic", "complex"}, None),
        rcond=_get(drv_t, "driver", "rcond", float, 1e-12),
        rtol=_get(drv_t, "driver", "rtol", float, 1e-8),
    )
    out = _resolve_out(cfg, args)
    log = driver.run(t_end, out=out, obs=build_observables(cfg, hil))
    serialize.save_params(f"{out}.params", state.params)
    if args.csv:
        write_csv(f"{out}.csv", log.data, "times")

    energy = log["Energy"]
    print(
        f"tdvp: reached t = {log.data['times'][-1]:g} in {len(log) - 1} steps, "
        f"Energy = {energy['Mean']['real'][-1]:.8f} -> {out}.log"
    )
    return 0


def cmd_ed(cfg: dict, args) -> int:
    ed_t = _table(cfg, "ed", required=False)
    _reject_unknown(ed_t, "ed", {"k"})
    k = _get(ed_t, "ed", "k", int, 1)
    hil, _, ham = build_system(cfg)
    if ham is None:
        raise ConfigError("ed needs a [system.hamiltonian] table")
    if isinstance(hil, Particle):
        raise ConfigError("ed works on discrete spaces only")
    vals, _ = oracle.ed_spectrum(ham, k=k)
    doc = json.dumps({"eigenvalues": [float(v) for v in np.atleast_1d(vals)]})
    print(doc)
    out = _resolve_out(cfg, args, required=False)
    if out is not None:
        with open(f"{out}.json", "w") as fh:
            fh.write(doc + "\n")
    return 0


def cmd_sample(cfg: dict, args) -> int:
    hil, graph, ham = build_system(cfg)
    model = build_model(cfg, hil, graph)
    state = build_state(cfg, hil, graph, ham, model)
    if isinstance(state, FullSumState):
        raise ConfigError("[sampler] kind 'full' enumerates states; nothing to sample")
    if args.resume:
        _load_resume(args.resume, state)
    out = _resolve_out(cfg, args)
    samples = state.flat_samples
    np.savetxt(f"{out}.csv", samples, fmt="%.17g", delimiter=",")
    print(f"sample: wrote {samples.shape[0]} configurations of {samples.shape[1]} "
          f"sites to {out}.csv")
    return 0


def cmd_chartable(cfg: dict, args) -> int:
    cht = _table(cfg, "chartable", required=False)
    _reject_unknown(cht, "chartable", {"group", "k"})
    which = _choice(cht, "chartable", "group", {"point", "space", "little"}, "point")
    sys_t = _table(cfg, "system")
    graph = build_lattice(sys_t)
    sg = symmetry.space_group(graph)
    if which == "space":
        group = sg
        title = f"space group ({len(group)} elements)"
    elif which == "point":
        group = sg.point_group
        title = f"point group ({len(group)} elements)"
    else:
        k = _get(cht, "chartable", "k", list, [0.0] * graph.ndim)
        group = sg.little_group(np.asarray(k, dtype=float))
        title = f"little group of k={list(k)} ({len(group)} elements)"
    print(title)
    print(symmetry.CharacterTable(group).readable())
    return 0


# -- entry point --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nqsvmc",
        description="Config-driven variational Monte Carlo runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "vmc": "optimise a ground state",
        "tdvp": "propagate in real or imaginary time",
        "ed": "exact diagonalisation of the configured Hamiltonian",
        "sample": "draw configurations and write them as CSV",
        "chartable": "print a character table",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="TOML config file")
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="patch a config entry")
        p.add_argument("--out", default=None, help="output path prefix")
        if name in ("vmc", "tdvp", "sample"):
            p.add_argument("--resume", default=None, metavar="SNAPSHOT",
                           help="start from a saved .params snapshot")
        if name in ("vmc", "tdvp"):
            p.add_argument("--csv", action="store_true",
                           help="also write <out>.csv with the logged traces")
    return parser


_COMMANDS = {
    "vmc": cmd_vmc,
    "tdvp": cmd_tdvp,
    "ed": cmd_ed,
    "sample": cmd_sample,
    "chartable": cmd_chartable,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.override)
        _reject_unknown(cfg, "config", _TOP_KEYS)
        return _COMMANDS[args.command](cfg, args)
    except (ConfigError, serialize.SnapshotError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FloatingPointError, np.linalg.LinAlgError, MemoryError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
