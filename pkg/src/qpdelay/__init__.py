"""Quasi-periodic solutions of delayed perturbation differential equations.

A numerical realization of the Craig-Wayne-Bourgain construction:
Fourier-lattice reduction, multi-scale inversion of the linearized
operator, frequency excision, and Newton iteration with scale-dependent
truncation, all validated against brute-force oracles at desk scale.
"""

from .lattice import FourierVector, KBox, LatticeIndex, LatticeOperator
from .model import DiagonalizedSpec, ProblemSpec, diagonalize, reconstruct_solution
from .newton import RunReport, SolveResult, SolverConfig, solve
from .verification import conjugate_symmetry_defect, convergence_order, dde_residual

__version__ = "0.1.0"

__all__ = [
    "DiagonalizedSpec", "FourierVector", "KBox", "LatticeIndex",
    "LatticeOperator", "ProblemSpec", "RunReport", "SolveResult",
    "SolverConfig", "conjugate_symmetry_defect", "convergence_order",
    "dde_residual", "diagonalize", "reconstruct_solution", "solve",
    "__version__",
]
