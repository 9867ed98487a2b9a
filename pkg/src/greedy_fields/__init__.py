"""Greedy paths and animals on marked Poisson point processes.

Exact solvers for the maximal mass collected by a path or a tree of bounded
length, Monte Carlo estimators of their limits and tail rates, and machine
checks of the inequalities relating them.
"""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigurationError,
    GreedyFieldsError,
    InfeasibleError,
    InvalidArgumentError,
)
from .geometry import Region
from .pointprocess import MarkLaw, PointConfiguration, sample_ppp
from .solver import SolveResult, SolveSpec, max_animal_mass_bracket, max_diamond_path_mass, max_path_mass, solve

__all__ = [
    "CapacityError",
    "ConfigurationError",
    "GreedyFieldsError",
    "InfeasibleError",
    "InvalidArgumentError",
    "MarkLaw",
    "PointConfiguration",
    "Region",
    "SolveResult",
    "SolveSpec",
    "max_animal_mass_bracket",
    "max_diamond_path_mass",
    "max_path_mass",
    "sample_ppp",
    "solve",
]
