"""Discretized density-amplitude pairs for the 1-D harmonic oscillator:
equilibrium conditions, the constrained variational problem, and a
perturbation-based stability test."""

from .grid import Grid, GridError, SampledFunction, make_grid
from .eec import EecState, OscillatorConfig, evaluate_conditions, evaluate_eec
from .spectrum import Multipliers, hamiltonian, hermite_state, solve_spectrum
from .variational import SolveOptions, solve
from .stability import PerturbationSpec, ToyEnsemble, classify, generate_ensemble

__version__ = "0.1.0"

__all__ = [
    "Grid", "GridError", "SampledFunction", "make_grid",
    "EecState", "OscillatorConfig", "evaluate_conditions", "evaluate_eec",
    "Multipliers", "hamiltonian", "hermite_state", "solve_spectrum",
    "SolveOptions", "solve",
    "PerturbationSpec", "ToyEnsemble", "classify", "generate_ensemble",
]
