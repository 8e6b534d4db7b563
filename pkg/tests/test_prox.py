import numpy as np
import pytest

from manprox import (
    ManifoldPoint,
    MaxInnerIterations,
    PreconditionError,
    Sphere,
    SparsePCAProblem,
    active_mask,
    gen_random,
    normal_basis,
    soft_threshold,
    solve_tangent_prox,
)
from oracles import oracle_tangent_prox


class TestSoftThreshold:
    def test_formula_examples(self):
        assert np.allclose(soft_threshold([2.0, -0.5, 0.0], 1.0), [1.0, 0.0, 0.0])
        assert np.allclose(soft_threshold([1.5, -3.0, 0.2], 0.2), [1.3, -2.8, 0.0])

    def test_tau_zero_is_identity(self, rng):
        z = rng.standard_normal(50)
        assert np.array_equal(soft_threshold(z, 0.0), z)

    def test_negative_tau_rejected(self):
        with pytest.raises(PreconditionError):
            soft_threshold([1.0], -0.1)

    def test_exact_zeros(self):
        out = soft_threshold([0.3, -0.2, 0.9], 0.5)
        assert out[0] == 0.0 and out[1] == 0.0

    def test_nonexpansive_bulk(self, rng):
        # 1e4 random pairs, a handful of tau values
        z1 = rng.standard_normal((10_000, 7))
        z2 = rng.standard_normal((10_000, 7))
        for tau in (0.0, 0.3, 1.7):
            d_out = np.linalg.norm(soft_threshold(z1, tau) - soft_threshold(z2, tau), axis=1)
            d_in = np.linalg.norm(z1 - z2, axis=1)
            assert np.all(d_out <= d_in + 1e-12)


def small_problem(n=6, mu=0.5, seed=1, m=20, r=1):
    A = gen_random(m, n, seed=seed)
    return SparsePCAProblem(A, mu=mu, r=r)


class TestSolveTangentProx:
    def test_smooth_case_closed_form(self, rng):
        for r in (1, 3):
            prob = small_problem(n=8, mu=0.0, r=r)
            x = prob.random_point(rng)
            g = prob.egrad(x.coords)
            t = prob.default_t
            sol = solve_tangent_prox(x, g, t, 0.0)
            grad = x.manifold.proj_tangent(x.coords, g)
            B = normal_basis(x)
            assert np.linalg.norm(sol.v.coords + t * grad) <= 1e-10
            assert np.linalg.norm(sol.lam + B.T @ g) <= 1e-10

    def test_stationary_point_gives_zero(self):
        # noise-free adversarial instance: e_1 is stationary for every mu
        from manprox import gen_handcrafted

        A, _ = gen_handcrafted(seed=0, noise=0.0)
        prob = SparsePCAProblem(A, mu=0.7)
        x = ManifoldPoint(np.eye(6)[0], Sphere(6))
        sol = solve_tangent_prox(x, prob.egrad(x.coords), prob.default_t, prob.mu)
        assert sol.v_norm <= 1e-12

    def test_frozen_sphere4_instance(self):
        # fixed-seed instance; expected values computed with the
        # first-order dual-ascent oracle and cross-checked against exact
        # sign-pattern enumeration
        A = gen_random(6, 4, seed=777)
        prob = SparsePCAProblem(A, mu=0.9)
        x = ManifoldPoint(
            np.array([-0.3870094604310353, 0.03129926022679945,
                      -0.5712228008779879, -0.7231518136624155]),
            Sphere(4),
        )
        t = 0.032692476646172905
        expected_v = np.array([-0.15455914869737913, -0.03129926022679945,
                               -0.01398226482825961, 0.09240548978325436])
        expected_lam = 24.677336188250962
        sol = solve_tangent_prox(x, prob.egrad(x.coords), t, prob.mu)
        assert np.linalg.norm(sol.v.coords - expected_v) <= 1e-8
        assert abs(sol.lam[0] - expected_lam) <= 1e-6

    def test_matches_first_order_oracle(self, rng):
        for trial in range(8):
            n = int(rng.integers(4, 9))
            prob = small_problem(n=n, mu=float(rng.uniform(0.3, 1.8)), seed=50 + trial, m=10)
            x = prob.random_point(rng)
            g = prob.egrad(x.coords)
            t = prob.default_t
            sol = solve_tangent_prox(x, g, t, prob.mu)
            v_ref, _, gap = oracle_tangent_prox(x.coords, normal_basis(x), g, t, prob.mu)
            assert gap <= 1e-13
            assert np.linalg.norm(sol.v.coords - v_ref) <= 1e-8

    def test_kkt_and_support_invariants(self, rng):
        for r, n in ((1, 9), (3, 7)):
            prob = small_problem(n=n, mu=0.6, seed=3, r=r)
            x = prob.random_point(rng)
            g = prob.egrad(x.coords)
            t = prob.default_t
            sol = solve_tangent_prox(x, g, t, prob.mu)
            B = normal_basis(x)
            z = x.coords - t * (g + B @ sol.lam)
            kkt = sol.v.coords + x.coords - soft_threshold(z, t * prob.mu)
            assert np.linalg.norm(kkt) <= 1e-10
            assert np.linalg.norm(B.T @ sol.v.coords) <= 1e-10
            # mask equals the support of x + v exactly
            support = (x.coords + sol.v.coords) != 0.0
            assert np.array_equal(sol.mask.astype(bool), support)

    def test_monotone_inner_residuals(self, rng):
        prob = small_problem(n=12, mu=0.8, seed=9, r=2)
        x = prob.random_point(rng)
        hist = []
        solve_tangent_prox(x, prob.egrad(x.coords), prob.default_t, prob.mu,
                           residual_history=hist)
        assert all(b < a for a, b in zip(hist, hist[1:]))

    def test_warm_start_cuts_iterations(self, rng):
        prob = small_problem(n=30, mu=0.8, seed=4, r=2)
        x = prob.random_point(rng)
        g = prob.egrad(x.coords)
        t = prob.default_t
        cold = solve_tangent_prox(x, g, t, prob.mu)
        warm = solve_tangent_prox(x, g, t, prob.mu, warm_lambda=cold.lam)
        assert warm.inner_iters <= cold.inner_iters

    def test_descent_direction(self, rng):
        # statistical check: v is a strict descent direction for F
        hits = 0
        for trial in range(20):
            prob = small_problem(n=10, mu=0.7, seed=200 + trial, m=15)
            x = prob.random_point(rng)
            sol = solve_tangent_prox(x, prob.egrad(x.coords), prob.default_t, prob.mu)
            if sol.v_norm == 0.0:
                continue
            F = lambda c: prob.f(c) + prob.mu * np.abs(c).sum()  # noqa: E731
            alpha = 1e-3
            y = x.manifold.retract(x.coords, alpha * sol.v.coords)
            hits += F(y) < F(x.coords)
        assert hits >= 19

    def test_errors(self, rng):
        prob = small_problem()
        x = prob.random_point(rng)
        with pytest.raises(PreconditionError):
            solve_tangent_prox(x, prob.egrad(x.coords), -1.0, prob.mu)
        # mu so large that the prox output is identically zero: Psi cannot
        # decrease and the inner Newton must report failure
        with pytest.raises(MaxInnerIterations):
            solve_tangent_prox(x, prob.egrad(x.coords), prob.default_t, 1e12)


class TestActiveMask:
    def test_smooth_case_all_ones(self, rng):
        prob = small_problem(mu=0.0)
        x = prob.random_point(rng)
        sol = solve_tangent_prox(x, prob.egrad(x.coords), prob.default_t, 0.0)
        mask = active_mask(x, prob.egrad(x.coords), sol.lam, prob.default_t, 0.0)
        assert np.all(mask == 1.0)

    def test_everything_below_threshold(self, rng):
        prob = small_problem()
        x = prob.random_point(rng)
        # enormous mu: |z_i| <= t*mu everywhere
        mask = active_mask(x, prob.egrad(x.coords), np.zeros(1), prob.default_t, 1e12)
        assert np.all(mask == 0.0)

    def test_boundary_maps_to_zero(self):
        x = ManifoldPoint(np.eye(3)[0], Sphere(3))
        # craft egrad so that z = x - t(egrad + B lam) has |z_1| = t*mu
        t, mu = 0.5, 2.0
        egrad = ((x.coords - np.array([t * mu, 0.0, 0.0])) / t)
        mask = active_mask(x, egrad, np.zeros(1), t, mu)
        assert mask[0] == 0.0
