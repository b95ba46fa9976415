"""Divergence-free space-time finite elements for the incompressible Navier-Stokes equations.

Scott-Vogelius velocity/pressure pairs on barycentric refinements, DG(1)
time slabs and a curl-based streamline stabilization.
"""

from .estimator import SpaceTimeNavierStokes
from .fe_spaces import FeSystem, build_system
from .mesh import Mesh, barycentric_refine, benchmark_mesh, generate_uniform, load_mesh, save_mesh
from .problems import convergence_problem, get_problem, lattice_vortex, robustness_problem
from .slab_solver import SolveConfig, TimeGrid, march

__all__ = [
    "FeSystem",
    "Mesh",
    "SolveConfig",
    "SpaceTimeNavierStokes",
    "TimeGrid",
    "barycentric_refine",
    "benchmark_mesh",
    "build_system",
    "convergence_problem",
    "generate_uniform",
    "get_problem",
    "lattice_vortex",
    "load_mesh",
    "march",
    "robustness_problem",
    "save_mesh",
]
__version__ = "0.1.0"
