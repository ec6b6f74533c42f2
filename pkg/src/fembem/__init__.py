"""Hybrid FEM-BEM coupling through an interface trace variable.

A volume finite element method for an interior reaction-diffusion problem
is coupled to a boundary element method for the exterior Laplace problem.
Both sides attach weakly, Nitsche style, to a shared trace unknown on the
interface, which also carries the Schur complement used by the nested
iterative solvers.
"""

from .bem import (BoundaryOperators, ExteriorBlocks, QuadratureConfig, TraceSpace,
                  assemble_adjoint_double_layer, assemble_double_layer,
                  assemble_exterior, assemble_hypersingular, assemble_single_layer,
                  build_boundary_operators, build_trace_space,
                  evaluate_exterior_potential, greens_kernel, solve_exterior_dirichlet,
                  surface_mass, symmetric_reduce)
from .coupling import (CoupledSystem, InnerOptions, SolutionBundle, assemble_coupled,
                       error_norms, schur_residual, solve_coupled)
from .fem import (InteriorBlocks, VolumeSpace, assemble_interior, assemble_load,
                  assemble_nitsche, build_volume_space, combine_interior,
                  interpolate, solve_interior_dirichlet, volume_l2_error)
from .harness import (ExperimentConfig, ManufacturedCase, Problem, ResultTable,
                      build_problem, cube_case, run_convergence, run_jacobi_study,
                      run_tau_sweep, sphere_case)
from .kernels import active_backend
from .mesh import (SurfaceMesh, TetMesh, export_gmsh, extract_boundary,
                   generate_ball_mesh, generate_cube_mesh, import_gmsh, mesh_size)
from .solvers import (IterationTrace, SolverConfig, cg, dense_solve, gmres,
                      relaxed_jacobi)

__version__ = "0.1.0"
