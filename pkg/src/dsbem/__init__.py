"""Galerkin boundary elements for double-sided Laplace problems in 3-D."""

__version__ = "0.1.0"

from .bvp import (
    IncompatibleDataError,
    Solution,
    solve,
    solve_dirichlet,
    solve_mixed_int_d_ext_n,
    solve_mixed_int_n_ext_d,
    solve_neumann,
)
from .mesh import SurfaceMesh, load_mesh, make_box, make_icosphere, mesh_stats, validate
from .operators import OperatorSet, assemble, boundary_traces, eval_double_layer, eval_representation, eval_single_layer
from .quadrature import QuadConfig
from .spaces import DensityP0, DensityP1, TracePair, WeakData, interpolate_p1, project_to_p0

__all__ = [
    "DensityP0",
    "DensityP1",
    "IncompatibleDataError",
    "OperatorSet",
    "QuadConfig",
    "Solution",
    "SurfaceMesh",
    "TracePair",
    "WeakData",
    "assemble",
    "boundary_traces",
    "eval_double_layer",
    "eval_representation",
    "eval_single_layer",
    "interpolate_p1",
    "load_mesh",
    "make_box",
    "make_icosphere",
    "mesh_stats",
    "project_to_p0",
    "solve",
    "solve_dirichlet",
    "solve_mixed_int_d_ext_n",
    "solve_mixed_int_n_ext_d",
    "solve_neumann",
    "validate",
]
