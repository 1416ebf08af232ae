"""Stability of equilibria of finite-dimensional Poisson systems."""

from .algebra import ALGEBRAS, LieAlgebra, get_algebra, isotropy, is_regular
from .errors import PoissonStabError
from .expr import Expression, parse
from .leafspace import T2Description, classify_generator, t2_description, wild_momenta
from .poisson import HamiltonianSystem, PoissonStructure, lie_poisson, r3_casimir, structure_matrix
from .stability import (StabilityVerdict, analyze, euclidean_criteria, linearization_spectrum,
                        reduced_energy_momentum, t2_energy_casimir)
from .dynamics import integrate, probe, reconstruct

__version__ = "0.1.0"

__all__ = [
    "ALGEBRAS", "LieAlgebra", "get_algebra", "isotropy", "is_regular", "PoissonStabError",
    "Expression", "parse", "T2Description", "classify_generator", "t2_description", "wild_momenta",
    "HamiltonianSystem", "PoissonStructure", "lie_poisson", "r3_casimir", "structure_matrix",
    "StabilityVerdict", "analyze", "euclidean_criteria", "linearization_spectrum",
    "reduced_energy_momentum", "t2_energy_casimir", "integrate", "probe", "reconstruct",
]
