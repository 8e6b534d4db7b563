"""Exception types raised by the solvers and geometry layers."""


class ManproxError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(ManproxError, ValueError):
    """An array argument has the wrong shape for the manifold."""


class FeasibilityError(ManproxError, ValueError):
    """A point fails the manifold feasibility residual check."""


class TangencyError(ManproxError, ValueError):
    """A vector fails the tangency residual check at its base point."""


class PreconditionError(ManproxError, ValueError):
    """An operation was called with inputs violating its contract."""


class MaxInnerIterations(ManproxError, RuntimeError):
    """The semismooth Newton solve of the subproblem did not reach the
    requested residual within its iteration cap.  Usually signals an
    ill-conditioned instance or a step parameter t that is too large."""


class AssumptionViolation(ManproxError, RuntimeError):
    """B_x^T M B_x is numerically singular at the current active mask, so
    the Newton operator cannot be assembled (rank condition fails)."""


class KrylovError(ManproxError, RuntimeError):
    """Base class for failures of the iterative linear solve."""


class KrylovBreakdown(KrylovError):
    """The transpose-free Krylov recurrence broke down."""


class MaxLinIterations(KrylovError):
    """The Krylov solve did not reach the residual tolerance within its
    iteration cap and no dense fallback was available."""


class LineSearchFailure(ManproxError, RuntimeError):
    """Backtracking exhausted its budget without satisfying the descent
    condition -- the step parameter t is too large for the curvature."""


class NonconvexSubproblem(ManproxError, RuntimeError):
    """The tangent-restricted Hessian has a nonpositive eigenvalue, so the
    naive second-order subproblem may be unbounded below."""
