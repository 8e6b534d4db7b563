"""Tangent-space proximal-gradient subproblem.

Solves, at a feasible point x with Euclidean gradient g,

    min_{v in T_x M}  <g, v> + (1/2t) ||v||^2 + mu ||x + v||_1

through its KKT system

    v = prox_{t mu}( x - t (g + B_x lambda) ) - x,     B_x^T v = 0,

where prox is the entrywise soft threshold.  The multiplier equation
Psi(lambda) = B_x^T (prox(x - t(g + B_x lambda)) - x) = 0 is solved by a
semismooth Newton iteration on the d-dimensional lambda with the
generalized Jacobian element -t B_x^T M B_x, M the current active mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import MaxInnerIterations, PreconditionError
from .manifolds import Array, ManifoldPoint, TangentVector

#: Backtracking halvings allowed inside one semismooth Newton step.
MAX_BACKTRACKS = 30
#: Iteration cap of the inner Newton loop; d is small, so running out
#: signals a modeling problem rather than a budget problem.
MAX_INNER_ITERS = 100


def soft_threshold(z, tau: float) -> Array:
    """Entrywise max(|z_i| - tau, 0) * sgn(z_i); the proximal mapping of
    tau*||.||_1.  Nonexpansive in z."""
    if tau < 0:
        raise PreconditionError("soft threshold needs tau >= 0")
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(np.abs(z) - tau, 0.0) * np.sign(z)


def active_mask(x: ManifoldPoint, egrad, lam, t: float, mu: float) -> Array:
    """0/1 mask with mask[i] = 0 iff |x - t(g + B lambda)|_i <= t*mu.

    Boundary entries |z_i| = t*mu map to 0, matching the representative
    generalized-Jacobian element used throughout.
    """
    g = np.asarray(egrad, dtype=np.float64).reshape(-1)
    B = x.manifold.normal_basis(x.coords)
    z = x.coords - t * (g + B @ np.atleast_1d(lam))
    return (np.abs(z) > t * mu).astype(np.float64)


@dataclass(frozen=True)
class ProxSolution:
    """Solution of the tangent-space subproblem at one outer iterate.

    Carries the step parameter ``t`` it was solved with, since the Newton
    operator assembled from this solution must use the same t.
    """

    v: TangentVector
    lam: Array
    mask: Array
    residual: float
    inner_iters: int
    t: float

    @property
    def v_norm(self) -> float:
        return self.v.norm


def solve_tangent_prox(
    x: ManifoldPoint,
    egrad,
    t: float,
    mu: float,
    warm_lambda=None,
    tol_inner: float | None = None,
    max_iter: int = MAX_INNER_ITERS,
    residual_history: list | None = None,
) -> ProxSolution:
    """Semismooth Newton solve of the multiplier equation Psi(lambda) = 0.

    The d x d Newton system is regularized, (t B^T M B + sigma I) delta =
    Psi with sigma = max(1e-12, 1e-10 ||Psi||), so the step stays defined
    when the rank condition fails at the current mask; steps are accepted
    only when they shrink ||Psi|| (halving backtracks, cap 30).  After the
    tolerance is met, extra full steps are taken while they still shrink
    ||Psi||, so the subproblem is solved essentially exactly -- the
    quadratic outer rate presumes this.

    Default tolerance: 1e-13 * sqrt(ambient_dim), absolute.
    """
    if t <= 0:
        raise PreconditionError("step parameter t must be positive")
    if mu < 0:
        raise PreconditionError("mu must be nonnegative")
    man = x.manifold
    n, d = man.ambient_dim, man.normal_dim
    if tol_inner is None:
        tol_inner = 1e-13 * np.sqrt(n)

    g = np.asarray(egrad, dtype=np.float64).reshape(-1)
    if g.size != n:
        raise PreconditionError("gradient has wrong ambient dimension")
    B = man.normal_basis(x.coords)
    tau = t * mu

    lam = np.zeros(d) if warm_lambda is None else np.array(warm_lambda, dtype=np.float64).reshape(d)

    base = x.coords - t * g

    def residual_at(lam_try):
        z = base - t * (B @ lam_try)
        p = soft_threshold(z, tau)
        r = B.T @ (p - x.coords)
        return r, z, p

    r, z, p = residual_at(lam)
    rn = float(np.linalg.norm(r))
    iters = 0
    converged = rn <= tol_inner
    if residual_history is not None:
        residual_history.append(rn)

    while iters < max_iter:
        if converged and rn <= 0.01 * tol_inner:
            break  # polished deep below tolerance
        mask = np.abs(z) > tau
        C = t * ((B.T * mask) @ B)
        sigma = max(1e-12, 1e-10 * rn)
        C[np.diag_indices_from(C)] += sigma
        try:
            delta = np.linalg.solve(C, r)
        except np.linalg.LinAlgError:
            if converged:
                break
            raise MaxInnerIterations(
                "singular inner Newton system; rank condition fails at the "
                f"current mask (residual {rn:.3e})"
            )

        if converged:
            # polish with full steps while they make strong progress,
            # so the multiplier is essentially exact at termination
            lam_try = lam + delta
            r_try, z_try, p_try = residual_at(lam_try)
            rn_try = float(np.linalg.norm(r_try))
            iters += 1
            if rn_try < 0.25 * rn:
                lam, r, z, p, rn = lam_try, r_try, z_try, p_try, rn_try
                if residual_history is not None:
                    residual_history.append(rn)
                continue
            break

        step = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            lam_try = lam + step * delta
            r_try, z_try, p_try = residual_at(lam_try)
            rn_try = float(np.linalg.norm(r_try))
            if rn_try < rn:
                lam, r, z, p, rn = lam_try, r_try, z_try, p_try, rn_try
                accepted = True
                if residual_history is not None:
                    residual_history.append(rn)
                break
            step *= 0.5
        iters += 1

        if not accepted:
            raise MaxInnerIterations(
                "inner Newton backtracking stalled above tolerance "
                f"(residual {rn:.3e}, tol {tol_inner:.3e}); t may be too large"
            )
        if rn <= tol_inner:
            converged = True

    if not converged:
        raise MaxInnerIterations(
            f"inner Newton did not reach tol {tol_inner:.3e} in {max_iter} "
            f"iterations (residual {rn:.3e})"
        )

    v = p - x.coords
    mask = (np.abs(z) > tau).astype(np.float64)
    return ProxSolution(
        v=TangentVector(v, x),
        lam=lam,
        mask=mask,
        residual=rn,
        inner_iters=iters,
        t=t,
    )
