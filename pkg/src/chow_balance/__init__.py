"""Balanced, sigma-balanced and relatively balanced projective embeddings.

Toric varieties are handled through monomial embeddings integrated on a
quadrature grid; zero-dimensional cycles (point configurations) exactly.
"""

from .embedded_variety import (LatticePolytope, MonomialEmbedding, PointConfiguration, QuadratureGrid,
                               build_grid, integrate_gram, total_mass)
from .torus_action import TorusData, build_torus, torus_from_matrix
from .moment_maps import Integrator, functional_G, grad_G, hess_G, mu0, mu0_sigma
from .solvers import (SolverOptions, SolveTrace, solve_optimal_weight, solve_relative_balanced,
                      solve_sigma_balanced, verify_theorem_equivalence)
from .chow_characters import KAPPA_CHAR, chow_form_points, verify_character_identity

__all__ = [
    "LatticePolytope", "MonomialEmbedding", "PointConfiguration", "QuadratureGrid", "build_grid",
    "integrate_gram", "total_mass", "TorusData", "build_torus", "torus_from_matrix", "Integrator",
    "functional_G", "grad_G", "hess_G", "mu0", "mu0_sigma", "SolverOptions", "SolveTrace",
    "solve_optimal_weight", "solve_relative_balanced", "solve_sigma_balanced",
    "verify_theorem_equivalence", "KAPPA_CHAR", "chow_form_points", "verify_character_identity",
]
