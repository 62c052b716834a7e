"""Iterated square-field operators and energy decay for finite Markov generators."""
from .energies import energy_explicit, energy_trajectory, energy_vector
from .errors import CarreLabError, PreconditionError
from .generator import (
    Generator,
    ProbabilityMeasure,
    cycle_laplacian,
    loop_chain,
    random_generator,
    stationary_measure,
    validate_generator,
)
from .hilbert import c_operator, classify, poincare_constant, spectral_gap
from .semigroup import TimeGrid, evolve, expm
from .squarefield import big_g, big_g_interp, gamma_n
from .verify import run_verification

__version__ = "0.1.0"

__all__ = [
    "CarreLabError", "Generator", "PreconditionError", "ProbabilityMeasure", "TimeGrid",
    "big_g", "big_g_interp", "c_operator", "classify", "cycle_laplacian", "energy_explicit",
    "energy_trajectory", "energy_vector", "evolve", "expm", "gamma_n", "loop_chain",
    "poincare_constant", "random_generator", "run_verification", "spectral_gap",
    "stationary_measure", "validate_generator",
]
