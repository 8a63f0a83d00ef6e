"""Variable-step solver for the time-fractional Allen-Cahn equation.

The package splits the nonuniform second-order Caputo discretization into
a local part and a positive-kernel history part, steps the phase field
implicitly with a maximum-bound-safe cap, and audits the kernel
inequalities underpinning the discrete gradient structure and the
modified-energy dissipation law.
"""

from .mesh import (
    AdaptiveConfig,
    MeshError,
    TimeMesh,
    adaptive_next_step,
    build_graded_mesh,
    build_two_phase_mesh,
    build_uniform_mesh,
    check_ratio_constraint,
    random_ratio_mesh,
)
from .kernels import (
    FracOrder,
    KernelSet,
    as_order,
    build_kernels,
    dgs_forms,
    frac_derivative,
    local_coefficient,
    min_step_ratio,
)
from .grid import Grid2D, grid_sum, laplacian, load_raw, norm_inf, norm_l2, save_pgm, save_raw
from .energy import EnergyRecord, dissipation_audit, free_energy, modified_energy
from .audits import AuditReport, audit_kernel_properties, diagnostics
from .solver import (
    AdaptiveSchedule,
    BoundViolation,
    ConvergenceError,
    ManufacturedForcing,
    SolveTrajectory,
    SolverConfig,
    crank_nicolson_step,
    run,
    step,
    step_size_cap,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveConfig",
    "AdaptiveSchedule",
    "AuditReport",
    "BoundViolation",
    "ConvergenceError",
    "EnergyRecord",
    "FracOrder",
    "Grid2D",
    "KernelSet",
    "ManufacturedForcing",
    "MeshError",
    "SolveTrajectory",
    "SolverConfig",
    "TimeMesh",
    "adaptive_next_step",
    "as_order",
    "audit_kernel_properties",
    "build_graded_mesh",
    "build_kernels",
    "build_two_phase_mesh",
    "build_uniform_mesh",
    "check_ratio_constraint",
    "crank_nicolson_step",
    "dgs_forms",
    "diagnostics",
    "dissipation_audit",
    "free_energy",
    "frac_derivative",
    "grid_sum",
    "laplacian",
    "load_raw",
    "local_coefficient",
    "min_step_ratio",
    "modified_energy",
    "norm_inf",
    "norm_l2",
    "random_ratio_mesh",
    "run",
    "save_pgm",
    "save_raw",
    "step",
    "step_size_cap",
    "__version__",
]
