"""Topology optimization with designs made of convex polygons.

The design is a union of K convex polygons (each the feasible set of S
equiangular halfspaces) mapped differentiably onto a structured FEA mesh.
Compliance is minimized under volume and optional minimum-edge-length
constraints with the Method of Moving Asymptotes.
"""
from .constraints import (ConstraintConfig, all_edge_lengths, edge_lengths,
                          min_length_constraint, smooth_min_length,
                          volume_constraint)
from .driver import (Evaluation, Evaluator, IterationRecord, OptRun, RunConfig,
                     check_gradients, make_evaluator, run, sweep)
from .errors import ConfigurationError, RunAborted, SolverError
from .fea import (FeaSolution, MeshProblem, assemble_solve,
                  element_stiffness_unit, problem_library, simp_modulus)
from .geometry import (Bounds, DensityField, DesignVector, PolygonSet,
                       ProjectionParams, density_field, grid_radius_for_volume,
                       halfspace_sdf, init_grid, normalize, polygon_area,
                       polygon_sdf, polygon_vertices, project_density,
                       union_density, unnormalize)
from .mma import MmaState, SubproblemMultipliers, kkt_residual, mma_update
from .sensitivity import (GradientBundle, fd_check, grad_minlength,
                          grad_objective, grad_volume)

__version__ = "0.1.0"
