"""QUBO encodings of database optimization problems with annealing samplers.

Join ordering, transaction scheduling and cloud task/VM allocation are each
encoded as a QUBO, sampled by simulated annealing or exhaustive enumeration,
and decoded back into domain solutions. Brute-force oracles for every
problem make the encodings checkable.
"""

from .qubo import IsingModel, QuboModel, from_ising, to_ising
from .sampler import AnnealParams, Sample, SampleSet, simulated_annealing, solve_exhaustive

__version__ = "0.1.0"

__all__ = [
    "AnnealParams",
    "IsingModel",
    "QuboModel",
    "Sample",
    "SampleSet",
    "from_ising",
    "simulated_annealing",
    "solve_exhaustive",
    "to_ising",
]
