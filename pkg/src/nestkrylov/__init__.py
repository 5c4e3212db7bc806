"""Mixed-precision nested Krylov solvers for sparse linear systems."""

__version__ = "0.1.0"

from .precision import Precision
from .sparse import CsrMatrix, PrecisionReplicas, StencilSpec, diagonal_scale, generate_stencil, read_matrix_market
from .precond import BlockJacobiIlu0, FactorizationError, IluConfig, factorize
from .krylov import ConvergenceReport, bicgstab_solve, cg_solve, fgmres_restarted
from .nesting import F3rConfig, NestedSolver, SolverSpec, SpecError, VARIANTS, build, build_f3r
from .costmodel import CostParams, advise_split

__all__ = [
    "Precision", "CsrMatrix", "PrecisionReplicas", "StencilSpec", "diagonal_scale", "generate_stencil",
    "read_matrix_market", "BlockJacobiIlu0", "FactorizationError", "IluConfig", "factorize",
    "ConvergenceReport", "bicgstab_solve", "cg_solve", "fgmres_restarted", "F3rConfig", "NestedSolver",
    "SolverSpec", "SpecError", "VARIANTS", "build", "build_f3r", "CostParams", "advise_split",
]
