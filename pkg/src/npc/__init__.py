"""Discrete harmonic maps from weighted graphs into NPC targets, with checks
of the regularity estimates that hold for them.

Modules
-------
domain      weighted graphs (paths, flat tori, hyperbolic disks) and vertex subsets
laplacian   graph Laplacian, heat semigroup and Laplacian-bound calculus
targets     CAT(0) target spaces: Euclidean, metric trees, hyperbolic plane, products
energy      ks energies, extrapolated energy density, slopes and weak gradients
solver      Dirichlet problem and the barycenter sweep solver
hopflax     Hopf–Lax semigroup, two-variable evolution, tilt and the prox map
verifier    subharmonicity, regularity estimates, ZZZ, Rademacher, Moser, Liouville
scenario    serializable scenarios, refinement studies and calibration
estimators  scikit-learn style facades
"""

from .domain import DomainGraph, VertexSubset, build_hyperbolic_disk, build_path, build_torus_grid
from .estimators import (EnergyDensityEstimator, HarmonicMapSolver, HeatSemigroupTransformer,
                         HopfLaxTransformer, ProxEstimator, ScenarioVerifier)
from .hopflax import HopfLaxResult, ProxResult, TwoVarFunction, hopf_lax, prox_map, two_var_evolve
from .report import DIAGNOSTIC, EXACT, PRECONDITION, TREND, CheckReport
from .scenario import RefinementStudy, Scenario, refine, run_checks, standard_scenarios
from .solver import DirichletProblem, SolveResult, SolverParams, solve_dirichlet
from .targets import Euclidean, HyperbolicPlane, MetricTree, Product, TargetSpace, space_from_dict

__version__ = "0.1.0"

__all__ = [
    "DomainGraph", "VertexSubset", "build_path", "build_torus_grid", "build_hyperbolic_disk",
    "Euclidean", "MetricTree", "HyperbolicPlane", "Product", "TargetSpace", "space_from_dict",
    "DirichletProblem", "SolverParams", "SolveResult", "solve_dirichlet",
    "TwoVarFunction", "HopfLaxResult", "ProxResult", "hopf_lax", "two_var_evolve", "prox_map",
    "CheckReport", "EXACT", "TREND", "DIAGNOSTIC", "PRECONDITION",
    "Scenario", "RefinementStudy", "run_checks", "refine", "standard_scenarios",
    "HarmonicMapSolver", "HeatSemigroupTransformer", "HopfLaxTransformer", "ProxEstimator",
    "EnergyDensityEstimator", "ScenarioVerifier",
]
