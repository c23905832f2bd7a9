"""Super-penalised discontinuous Galerkin methods and their continuous limits.

Stationary advection-diffusion-reaction problems with possibly degenerate
diffusion live in :mod:`penalimit.nncf`; the coupled Darcy / transport
system of miscible displacement in :mod:`penalimit.darcy` and
:mod:`penalimit.transport`.
"""
from .adapt import AdaptPolicy, face_jump_indicator, schedule, select_region
from .darcy import DarcySolver, DarcyState, ImdParams, solve_darcy
from .kernels import BACKEND
from .linalg import SingularMatrixError, gauss_rule, solve_direct, solve_penalized
from .mesh import RegionPartition, build_uniform_mesh, full_region, make_region
from .nncf import NncfModel, NncfProblem, PenaltyConfig, layer_problem
from .spaces import ScalarField, build_constraints, build_dg_space, build_rt0_p0
from .transport import ImdModel, dispersion, run

__all__ = [
    "AdaptPolicy", "BACKEND", "DarcySolver", "DarcyState", "ImdModel", "ImdParams",
    "NncfModel", "NncfProblem", "PenaltyConfig", "RegionPartition", "ScalarField",
    "SingularMatrixError", "build_constraints", "build_dg_space", "build_rt0_p0",
    "build_uniform_mesh", "dispersion", "face_jump_indicator", "full_region", "gauss_rule",
    "layer_problem", "make_region", "run", "schedule", "select_region", "solve_darcy",
    "solve_direct", "solve_penalized",
]
