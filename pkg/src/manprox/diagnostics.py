"""Runnable checkers for the stationarity, rank and second-order
conditions, plus the convergence-rate estimator used by the benchmarks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import ManproxError, PreconditionError
from .manifolds import ManifoldPoint
from .newton import build_state, materialize_J
from .prox import ProxSolution, solve_tangent_prox
from .solvers import ConvergenceTrace

#: Stationarity threshold required before the second-order check applies.
STATIONARITY_TOL = 1e-8
#: PSD decision threshold on the smallest restricted eigenvalue.
PSD_TOL = 1e-8
#: Tangent-dimension guard for the dense nonsingularity assertion.
DENSE_ASSERT_DIM = 200


def check_stationarity(x: ManifoldPoint, problem, t: float) -> float:
    """||v(x)|| from a fresh subproblem solve; 0 at stationary points."""
    prox = solve_tangent_prox(x, problem.egrad(x.coords), t, problem.mu)
    return prox.v_norm


def check_assumption_rank(x: ManifoldPoint, mask) -> tuple[bool, float]:
    """Rank condition at the active mask: the rows of B_x selected by the
    mask must number at least d and have full column rank.  Returns
    (ok, smallest singular value of the selected rows)."""
    mask = np.asarray(mask).reshape(-1).astype(bool)
    B = x.manifold.normal_basis(x.coords)
    d = B.shape[1]
    j = int(mask.sum())
    if j < d:
        return False, 0.0
    sigma_min = float(np.linalg.svd(B[mask], compute_uv=False)[-1])
    return sigma_min > 1e-10, sigma_min


def check_second_order(
    x: ManifoldPoint, problem, prox: ProxSolution
) -> tuple[bool, float]:
    """Second-order condition on the active block.

    Restricts the Euclidean Hessian minus the Weingarten operator (with
    normal vector B_x lambda) to active coordinates intersected with the
    null space of the active rows of B_x, and reports the smallest
    eigenvalue; psd iff it is >= -1e-8.  A trivial null space yields the
    +inf sentinel.  When the restricted block is definite, J(x) is also
    asserted nonsingular by dense materialization (at desk scale).
    """
    if prox.v_norm > STATIONARITY_TOL:
        raise PreconditionError(
            f"second-order check needs ||v|| <= {STATIONARITY_TOL:.0e}, "
            f"got {prox.v_norm:.3e}"
        )
    man = x.manifold
    n = man.ambient_dim
    active = np.asarray(prox.mask).reshape(-1).astype(bool)
    B = man.normal_basis(x.coords)
    B_bar = B[active]
    Z = scipy.linalg.null_space(B_bar.T) if B_bar.size else np.zeros((0, 0))

    if Z.shape[1] == 0:
        min_eig = math.inf
        psd = True
    else:
        normal_vec = B @ prox.lam
        cols = []
        for k in range(Z.shape[1]):
            zeta = np.zeros(n)
            zeta[active] = Z[:, k]
            col = problem.ehess(x.coords, zeta) - man.weingarten(
                x.coords, zeta, normal_vec
            )
            cols.append(col[active])
        G = Z.T @ np.column_stack(cols)
        G = (G + G.T) / 2.0
        min_eig = float(np.linalg.eigvalsh(G)[0])
        psd = min_eig >= -PSD_TOL

    if min_eig > PSD_TOL and man.tangent_dim <= DENSE_ASSERT_DIM:
        state = build_state(x, prox, problem)
        J_mat, _ = materialize_J(state, x)
        smin = float(np.linalg.svd(J_mat, compute_uv=False)[-1])
        if smin <= 1e-12 * max(1.0, float(np.linalg.norm(J_mat))):
            raise ManproxError(
                f"definite active block but J(x) numerically singular "
                f"(sigma_min = {smin:.3e})"
            )
    return psd, min_eig


@dataclass(frozen=True)
class RateEstimate:
    """Log-log regression of ||v_{k+1}|| on ||v_k|| over the Newton tail."""

    slope: float
    tail_len: int
    classification: str  # quadratic | superlinear | linear | insufficient


def estimate_rate(trace: ConvergenceTrace, floor: float | None = None) -> RateEstimate:
    """Classify the Newton tail: quadratic (slope >= 1.8), superlinear
    (1.2 < slope < 1.8) or linear (slope <= 1.2).

    ||v|| is computed by cancelling O(||x||) quantities, so values below
    the measurement floor (a few times eps * ||x||, stamped on the trace
    by the runners) are pure noise and the tail is truncated before the
    first one.  Values just above the floor are kept: their logs carry
    small bias but real rate information.  At least three tail values are
    required for a classification.
    """
    if floor is None:
        floor = trace.v_floor if trace.v_floor is not None else 2e-15
    tail = []
    for val in trace.newton_tail_v_norms():
        if val < floor or val <= 0.0:
            break
        tail.append(float(val))
    if len(tail) < 3:
        return RateEstimate(float("nan"), len(tail), "insufficient")
    logs = np.log(np.array(tail))
    xs, ys = logs[:-1], logs[1:]
    slope = float(np.polyfit(xs, ys, 1)[0])
    if slope >= 1.8:
        cls = "quadratic"
    elif slope > 1.2:
        cls = "superlinear"
    else:
        cls = "linear"
    return RateEstimate(slope, len(tail), cls)


def check_support_stability(trace: ConvergenceTrace) -> int | None:
    """First iteration of the Newton tail whose active mask differs from
    the preceding one; None when the support is stable throughout."""
    tail = []
    for rec in reversed(trace.records):
        if rec.phase != "newton":
            break
        tail.append(rec)
    tail.reverse()
    prev = None
    for rec in tail:
        if rec.support is None:
            continue
        if prev is not None and not np.array_equal(rec.support, prev):
            return rec.k
        prev = rec.support
    return None
