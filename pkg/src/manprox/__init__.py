"""Proximal Newton and proximal gradient solvers for l1-regularized
optimization over embedded submanifolds, with sparse PCA benchmarks."""

from .exceptions import (
    AssumptionViolation,
    DimensionMismatch,
    FeasibilityError,
    KrylovBreakdown,
    KrylovError,
    LineSearchFailure,
    ManproxError,
    MaxInnerIterations,
    MaxLinIterations,
    NonconvexSubproblem,
    PreconditionError,
    TangencyError,
)
from .manifolds import (
    ManifoldPoint,
    Oblique,
    Sphere,
    Stiefel,
    TangentVector,
    normal_basis,
    proj_tangent,
    retract,
    weingarten,
)
from .prox import ProxSolution, active_mask, soft_threshold, solve_tangent_prox
from .newton import NewtonState, apply_J, build_state, solve_newton, tangent_basis
from .problems import (
    SparsePCAProblem,
    gen_handcrafted,
    gen_random,
    gen_synthetic,
    sparsity,
)
from .solvers import (
    ALGORITHMS,
    ConvergenceTrace,
    SolverConfig,
    manpg_step,
    rpn_naive_step,
    rpn_step,
    run_manpg,
    run_rpn,
    run_rpn_g,
    run_rpn_naive,
    solve_naive_subproblem,
)
from .diagnostics import (
    RateEstimate,
    check_assumption_rank,
    check_second_order,
    check_stationarity,
    check_support_stability,
    estimate_rate,
)

__version__ = "0.1.0"
