"""Outer iterations: proximal gradient (ManPG), proximal Newton (RPN),
the globalized hybrid (RPN-G), and the naive second-order baseline (RPN-N).

All four share the trace format: one record per outer iteration holding
(k, F, ||v_k||, alpha, phase, inner iterations, linear-solver iterations,
wall time), plus a summary row with the benchmark-table columns.  ||v_k||
is recorded when the subproblem is solved, before stepping.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .exceptions import (
    AssumptionViolation,
    KrylovError,
    LineSearchFailure,
    ManproxError,
    MaxInnerIterations,
    NonconvexSubproblem,
    PreconditionError,
)
from .manifolds import Array, ManifoldPoint, TangentVector, retract
from .newton import build_state, solve_newton, tangent_basis
from .prox import ProxSolution, soft_threshold, solve_tangent_prox
from .problems import sparsity


@dataclass(frozen=True)
class SolverConfig:
    """Shared solver parameters.

    t is the proximal step parameter (1 / (2 ||A||_2^2) for sparse PCA),
    rho the backtracking factor, epsilon the gradient-to-Newton switch
    threshold of the hybrid, tol_final the stopping threshold on ||v_k||.
    """

    t: float
    mu: float
    rho: float = 0.5
    epsilon: float = 1e-4
    tol_final: float = 1e-12
    max_iter: int = 3000
    max_backtracks: int = 50
    seed: int = 0

    def __post_init__(self):
        if not self.t > 0:
            raise PreconditionError("t must be positive")
        if self.mu < 0:
            raise PreconditionError("mu must be nonnegative")
        if not (0.0 < self.rho <= 0.5):
            raise PreconditionError("rho must lie in (0, 1/2]")
        if not (self.epsilon > self.tol_final >= 0.0):
            raise PreconditionError("need epsilon > tol_final >= 0")
        if self.max_iter < 0 or self.max_backtracks < 1:
            raise PreconditionError("bad iteration caps")

    @classmethod
    def for_problem(cls, problem, **overrides) -> "SolverConfig":
        kw = {"t": problem.default_t, "mu": problem.mu}
        kw.update(overrides)
        return cls(**kw)


@dataclass
class TraceRecord:
    k: int
    f: float
    v_norm: float
    alpha: float
    phase: str  # "gradient" or "newton": the direction used at this iteration
    inner_iters: int
    lin_iters: int
    wall_ns: int
    # audit-only fields, not serialized
    feas_residual: float = 0.0
    support: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        return {
            "k": self.k,
            "f": self.f,
            "v_norm": self.v_norm,
            "alpha": self.alpha,
            "phase": self.phase,
            "inner_iters": self.inner_iters,
            "lin_iters": self.lin_iters,
            "wall_ns": self.wall_ns,
        }


@dataclass
class RunSummary:
    """Benchmark-table row: iterations, first iteration reaching the final
    accuracy decade, Newton-direction count, final objective, sparsity of
    the terminal prox output x + v, and the final ||v||."""

    iter: int
    iter_v: int
    iter_u: int
    f_final: float
    sparsity: float
    v_final: float


@dataclass
class ConvergenceTrace:
    records: list[TraceRecord]
    summary: RunSummary
    #: measurement floor of ||v||: values below it are cancellation noise
    #: (set by the runners from the iterate norm, which is constant on
    #: the supported manifolds)
    v_floor: float | None = None

    def v_norms(self) -> np.ndarray:
        return np.array([r.v_norm for r in self.records])

    def phases(self) -> list[str]:
        return [r.phase for r in self.records]

    def newton_tail_v_norms(self) -> np.ndarray:
        """||v_k|| over the trailing run of newton-phase records."""
        vals = []
        for rec in reversed(self.records):
            if rec.phase != "newton":
                break
            vals.append(rec.v_norm)
        return np.array(vals[::-1])


def _objective(problem, mu: float):
    def F(coords: Array) -> float:
        return problem.f(coords) + mu * float(np.abs(coords).sum())

    return F


def _first_decade_iteration(records) -> int:
    v_final = records[-1].v_norm
    if v_final <= 0.0:
        for rec in records:
            if rec.v_norm <= 0.0:
                return rec.k
        return records[-1].k
    threshold = 10.0 ** (math.floor(math.log10(v_final)) + 1)
    for rec in records:
        if rec.v_norm < threshold:
            return rec.k
    return records[-1].k


def _v_measurement_floor(x0: ManifoldPoint) -> float:
    return 3.5 * float(np.finfo(np.float64).eps) * (1.0 + float(np.linalg.norm(x0.coords)))


def _summarize(records, terminal_x_plus_v: Array) -> RunSummary:
    return RunSummary(
        iter=records[-1].k,
        iter_v=_first_decade_iteration(records),
        iter_u=sum(1 for r in records if r.phase == "newton" and r.alpha > 0),
        f_final=records[-1].f,
        sparsity=sparsity(terminal_x_plus_v),
        v_final=records[-1].v_norm,
    )


# ---------------------------------------------------------------------------
# Single steps


def manpg_step(x: ManifoldPoint, cfg: SolverConfig, problem, prox: ProxSolution | None = None):
    """One proximal-gradient step with backtracking.

    Accepts the first alpha in {1, rho, rho^2, ...} with
    F(R_x(alpha v)) <= F(x) - alpha ||v||^2 / 2.  Returns
    (x_next, prox_solution, alpha).
    """
    if prox is None:
        prox = solve_tangent_prox(x, problem.egrad(x.coords), cfg.t, cfg.mu)
    F = _objective(problem, cfg.mu)
    vn = prox.v_norm
    if vn == 0.0:
        return x, prox, 1.0
    fx = F(x.coords)
    alpha = 1.0
    for _ in range(cfg.max_backtracks + 1):
        step = alpha * prox.v.coords
        if np.array_equal(x.coords + step, x.coords):
            # the trial update underflows every coordinate: the step is a
            # no-op and the predicate holds with equality.  This is where
            # the method plateaus once 0.5 alpha ||v||^2 drops below the
            # rounding noise of F.
            return x, prox, alpha
        x_trial = ManifoldPoint(x.manifold.retract(x.coords, step), x.manifold)
        if F(x_trial.coords) <= fx - 0.5 * alpha * vn * vn:
            return x_trial, prox, alpha
        last_alpha = alpha
        alpha *= cfg.rho
    if 0.5 * vn * vn <= 8.0 * np.finfo(np.float64).eps * (1.0 + abs(fx)):
        # even the unit-step margin is below the rounding noise of F: the
        # comparisons above were noise, so the iterate is frozen at its
        # floating-point plateau rather than aborted
        return x, prox, last_alpha
    raise LineSearchFailure(
        f"no decrease after {cfg.max_backtracks} backtracks (||v|| = {vn:.3e}); "
        "t is too large relative to the curvature"
    )


def rpn_step(x: ManifoldPoint, cfg: SolverConfig, problem, prox: ProxSolution | None = None,
             stats: dict | None = None):
    """One proximal Newton step: unit step along u solving J(x)[u] = -v.

    Returns (x_next, prox_solution, u).  Failures of the state build or of
    the linear solve propagate to the caller.
    """
    if prox is None:
        prox = solve_tangent_prox(x, problem.egrad(x.coords), cfg.t, cfg.mu)
    state = build_state(x, prox, problem)
    u = solve_newton(state, x, prox.v, stats=stats)
    x_next = retract(x, u)
    return x_next, prox, u


# ---------------------------------------------------------------------------
# Naive second-order baseline subproblem


@dataclass(frozen=True)
class NaiveSolution:
    v: TangentVector
    lam: Array
    mask: Array
    residual: float
    inner_iters: int
    x_plus_v: Array


#: Ambient-dimension guard for the dense naive subproblem solver.
NAIVE_DENSE_LIMIT = 1000


def solve_naive_subproblem(
    x: ManifoldPoint,
    problem,
    sigma: float,
    mu: float,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> NaiveSolution:
    """Tangent-constrained composite quadratic subproblem of the naive
    baseline: replace the Euclidean gradient/Hessian of the proximal
    Newton model with their Riemannian counterparts and keep h(x + v).

    Solved as the stacked semismooth system

        G(v, lambda) = [ v + x - prox_{sigma h}(x + v - sigma (g_R + H_R v
                          + B lambda)) ;  B^T v ] = 0,

    by a damped semismooth Newton iteration on (v, lambda).  Requires the
    tangent-restricted Riemannian Hessian to be positive definite.
    """
    man = x.manifold
    n, d = man.ambient_dim, man.normal_dim
    if n > NAIVE_DENSE_LIMIT:
        raise PreconditionError(
            f"naive baseline solves a dense {n}x{n} system; ambient dimension "
            f"capped at {NAIVE_DENSE_LIMIT}"
        )
    g_amb = problem.egrad(x.coords)
    g_r = man.proj_tangent(x.coords, g_amb)
    g_normal = g_amb - g_r
    B = man.normal_basis(x.coords)

    def hess_r(w: Array) -> Array:
        pw = man.proj_tangent(x.coords, w)
        return man.proj_tangent(x.coords, problem.ehess(x.coords, pw)) + man.weingarten(
            x.coords, pw, g_normal
        )

    H = np.column_stack([hess_r(e) for e in np.eye(n)])
    H = (H + H.T) / 2.0

    Q = tangent_basis(x)
    eigmin = float(np.linalg.eigvalsh(Q.T @ H @ Q)[0])
    if eigmin <= 0.0:
        raise NonconvexSubproblem(
            f"tangent-restricted Hessian has eigenvalue {eigmin:.3e} <= 0"
        )

    tau = sigma * mu
    v = np.zeros(n)
    lam = np.zeros(d)

    def system(v_cur, lam_cur):
        z = x.coords + v_cur - sigma * (g_r + H @ v_cur + B @ lam_cur)
        p = soft_threshold(z, tau)
        G = np.concatenate([v_cur + x.coords - p, B.T @ v_cur])
        return G, z, p

    G, z, p = system(v, lam)
    gn = float(np.linalg.norm(G))
    iters = 0
    while gn > tol:
        if iters >= max_iter:
            raise MaxInnerIterations(
                f"naive subproblem stalled at residual {gn:.3e} (tol {tol:.1e})"
            )
        mask = (np.abs(z) > tau).astype(np.float64)
        top = np.eye(n) - mask[:, None] * (np.eye(n) - sigma * H)
        jac = np.zeros((n + d, n + d))
        jac[:n, :n] = top
        jac[:n, n:] = sigma * mask[:, None] * B
        jac[n:, :n] = B.T
        try:
            delta = scipy.linalg.solve(jac, -G)
        except scipy.linalg.LinAlgError:
            jac[np.diag_indices_from(jac)] += 1e-12
            delta = scipy.linalg.solve(jac, -G)
        step = 1.0
        accepted = False
        for _ in range(30):
            v_try = v + step * delta[:n]
            lam_try = lam + step * delta[n:]
            G_try, z_try, p_try = system(v_try, lam_try)
            gn_try = float(np.linalg.norm(G_try))
            if gn_try < gn:
                v, lam, G, z, p, gn = v_try, lam_try, G_try, z_try, p_try, gn_try
                accepted = True
                break
            step *= 0.5
        iters += 1
        if not accepted:
            raise MaxInnerIterations(
                f"naive subproblem backtracking stalled at residual {gn:.3e}"
            )

    v = man.proj_tangent(x.coords, v)
    mask = (np.abs(z) > tau).astype(np.float64)
    return NaiveSolution(
        v=TangentVector(v, x),
        lam=lam,
        mask=mask,
        residual=gn,
        inner_iters=iters,
        x_plus_v=p,
    )


def rpn_naive_step(x: ManifoldPoint, cfg: SolverConfig, problem,
                   sol: NaiveSolution | None = None):
    """One step of the naive baseline: unit step along its own direction."""
    if sol is None:
        sol = solve_naive_subproblem(x, problem, cfg.t, cfg.mu)
    x_next = ManifoldPoint(x.manifold.retract(x.coords, sol.v.coords), x.manifold)
    return x_next, sol


# ---------------------------------------------------------------------------
# Runners


def _attach_partial_trace(exc: ManproxError, records, x, prox):
    if records:
        x_plus_v = x.coords + (prox.v.coords if prox is not None else 0.0)
        exc.partial_trace = ConvergenceTrace(records, _summarize(records, x_plus_v))
    else:
        exc.partial_trace = None
    return exc


def _run_prox_family(x0: ManifoldPoint, cfg: SolverConfig, problem, mode: str) -> ConvergenceTrace:
    """Shared driver for manpg / rpn / rpn-g."""
    F = _objective(problem, cfg.mu)
    x = x0
    warm = None
    records: list[TraceRecord] = []
    newton_phase = mode == "rpn"
    pending: ProxSolution | None = None
    prox: ProxSolution | None = None
    # retry threshold after a rejected Newton step: attempts resume only
    # once the gradient phase has halved ||v|| below the failure level,
    # so rejected attempts cannot cycle
    newton_gate = float("inf")
    k = 0
    while True:
        t_start = time.perf_counter_ns()
        if pending is not None:
            prox, pending = pending, None
        else:
            prox = solve_tangent_prox(
                x, problem.egrad(x.coords), cfg.t, cfg.mu, warm_lambda=warm
            )
        warm = prox.lam
        vn = prox.v_norm
        fx = F(x.coords)
        if mode == "rpn-g":
            newton_phase = vn <= cfg.epsilon and vn <= newton_gate

        hit_tol = newton_phase and vn <= cfg.tol_final and mode in ("rpn", "rpn-g")
        if hit_tol or k >= cfg.max_iter:
            records.append(
                TraceRecord(
                    k=k,
                    f=fx,
                    v_norm=vn,
                    alpha=0.0,
                    phase="newton" if newton_phase else "gradient",
                    inner_iters=prox.inner_iters,
                    lin_iters=0,
                    wall_ns=time.perf_counter_ns() - t_start,
                    feas_residual=x.manifold.feasibility_residual(x.coords),
                    support=prox.mask.astype(bool) if newton_phase else None,
                )
            )
            break

        if newton_phase:
            stats: dict = {}
            failed = False
            x_trial = None
            prox_trial = None
            try:
                x_trial, _, _ = rpn_step(x, cfg, problem, prox=prox, stats=stats)
                prox_trial = solve_tangent_prox(
                    x_trial,
                    problem.egrad(x_trial.coords),
                    cfg.t,
                    cfg.mu,
                    warm_lambda=prox.lam,
                )
                # hybrid safeguard: outside the contraction basin a Newton
                # step can inflate ||v|| and oscillate the active set; any
                # non-decrease rejects the step
                if mode == "rpn-g" and prox_trial.v_norm > vn:
                    failed = True
            except (AssumptionViolation, KrylovError, MaxInnerIterations):
                if mode == "rpn":
                    raise
                failed = True

            if failed and mode == "rpn-g":
                newton_gate = vn / 2.0

            if not failed:
                records.append(
                    TraceRecord(
                        k=k,
                        f=fx,
                        v_norm=vn,
                        alpha=1.0,
                        phase="newton",
                        inner_iters=prox.inner_iters,
                        lin_iters=stats.get("lin_iters", 0),
                        wall_ns=time.perf_counter_ns() - t_start,
                        feas_residual=x.manifold.feasibility_residual(x.coords),
                        support=prox.mask.astype(bool),
                    )
                )
                x = x_trial
                pending = prox_trial
                warm = prox_trial.lam
                k += 1
                continue
            # hybrid fallback: one gradient iteration from the same point

        try:
            x_next, _, alpha = manpg_step(x, cfg, problem, prox=prox)
        except LineSearchFailure as exc:
            raise _attach_partial_trace(exc, records, x, prox)
        records.append(
            TraceRecord(
                k=k,
                f=fx,
                v_norm=vn,
                alpha=alpha,
                phase="gradient",
                inner_iters=prox.inner_iters,
                lin_iters=0,
                wall_ns=time.perf_counter_ns() - t_start,
                feas_residual=x.manifold.feasibility_residual(x.coords),
                support=None,
            )
        )
        x = x_next
        k += 1

    return ConvergenceTrace(
        records, _summarize(records, x.coords + prox.v.coords),
        v_floor=_v_measurement_floor(x0),
    )


def run_manpg(x0: ManifoldPoint, cfg: SolverConfig, problem) -> ConvergenceTrace:
    """Proximal gradient iterations until max_iter (benchmark protocol)."""
    return _run_prox_family(x0, cfg, problem, "manpg")


def run_rpn(x0: ManifoldPoint, cfg: SolverConfig, problem) -> ConvergenceTrace:
    """Pure proximal Newton from x0; solver failures surface to the caller."""
    return _run_prox_family(x0, cfg, problem, "rpn")


def run_rpn_g(x0: ManifoldPoint, cfg: SolverConfig, problem) -> ConvergenceTrace:
    """Hybrid: gradient steps until ||v_k|| <= epsilon, then Newton steps
    until ||v_k|| <= tol_final.

    A Newton step that fails or does not decrease ||v|| is replaced by a
    gradient step for that iteration, and further Newton attempts wait
    until the gradient phase halves ||v|| below the failure level.  When
    every Newton step contracts, the trajectory equals the plain
    concatenation of the two phases."""
    return _run_prox_family(x0, cfg, problem, "rpn-g")


def run_rpn_naive(x0: ManifoldPoint, cfg: SolverConfig, problem) -> ConvergenceTrace:
    """Naive second-order baseline driver, unit steps, stops at tol_final."""
    x = x0
    records: list[TraceRecord] = []
    F = _objective(problem, cfg.mu)
    k = 0
    sol: NaiveSolution | None = None
    while True:
        t_start = time.perf_counter_ns()
        sol = solve_naive_subproblem(x, problem, cfg.t, cfg.mu)
        vn = sol.v.norm
        fx = F(x.coords)
        terminal = vn <= cfg.tol_final or k >= cfg.max_iter
        records.append(
            TraceRecord(
                k=k,
                f=fx,
                v_norm=vn,
                alpha=0.0 if terminal else 1.0,
                phase="newton",
                inner_iters=sol.inner_iters,
                lin_iters=0,
                wall_ns=time.perf_counter_ns() - t_start,
                feas_residual=x.manifold.feasibility_residual(x.coords),
                support=sol.mask.astype(bool),
            )
        )
        if terminal:
            break
        x, _ = rpn_naive_step(x, cfg, problem, sol=sol)
        k += 1
    return ConvergenceTrace(
        records, _summarize(records, sol.x_plus_v), v_floor=_v_measurement_floor(x0)
    )


ALGORITHMS = {
    "manpg": run_manpg,
    "rpn": run_rpn,
    "rpn-g": run_rpn_g,
    "rpn-n": run_rpn_naive,
}
