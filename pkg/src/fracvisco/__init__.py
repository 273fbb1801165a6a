"""Finite element solver for viscoelasticity with a power-law kernel.

Velocity-form elastodynamics in which the stress is a fractional-order
time integral of the strain history,

    rho dw/dt - div( I^{1-alpha}[ D_hat eps(w) ] ) = f,

discretized with Lagrange P1/P2 triangles in space, a trapezoidal step in
time, and a product quadrature (exact on piecewise linear interpolants)
for the weakly singular history integral.
"""

__version__ = "0.1.0"

from .fem import (FeSpace, Material, QuadratureRule, assemble_load,
                  assemble_mass, assemble_stiffness, elliptic_project,
                  error_norms, function_l2_norm, triangle_rule)
from .fracquad import (FracWeights, qn_apply, quadrature_error_order,
                       rl_integral_oracle, rl_integral_power)
from .linalg import (CgError, CgReport, SparseMatrix, cg_solve,
                     eliminate_dirichlet, from_triplets)
from .manufactured import (ManufacturedCase, PowerSum, SpatialField,
                           custom_case, example1, example2, sine_bubble_field)
from .mesh import (Mesh, boundary_vertices, build_rectangle, build_unit_square,
                   diameters, signed_areas, validate, write_text)
from .solver import (ProblemSetup, SeparableForce, SolveRecord, SolverError,
                     TimeStepper, run, step_matrix, step_rhs, verify_record)
from .studies import (ConfigError, StudyConfig, StudyResult, run_diagonal,
                      run_single, run_spatial_rates, run_study, run_table)

__all__ = [name for name in dir() if not name.startswith("_")]
