"""Variational Monte Carlo engine for neural quantum states."""

from . import (
    cli,
    drivers,
    hilbert,
    lattice,
    models,
    operator,
    oracle,
    paramtree,
    qgt,
    sampler,
    serialize,
    symmetry,
)
from .drivers import SR, TDVP, VMC, FullSumState, MCState, Sgd
from .hilbert import Fock, Particle, Qubit, Spin, SpinOrbitalFermions
from .models import GCNN, RBM, Gaussian, Jastrow, RBMSymm
from .qgt import QGTJacobian, QGTOnTheFly
from .rng import RngKey
from .sampler import (
    ExactSampler,
    MetropolisExchange,
    MetropolisGaussian,
    MetropolisHamiltonian,
    MetropolisLocal,
    MetropolisSampler,
)

__version__ = "0.1.0"
