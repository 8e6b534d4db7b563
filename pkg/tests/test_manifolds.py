import numpy as np
import pytest

from manprox import (
    DimensionMismatch,
    FeasibilityError,
    ManifoldPoint,
    Oblique,
    PreconditionError,
    Sphere,
    Stiefel,
    TangencyError,
    TangentVector,
    normal_basis,
    proj_tangent,
    retract,
    weingarten,
)
from oracles import fd_basis_derivative, fd_projector_derivative

MANIFOLDS = [Sphere(7), Stiefel(8, 3), Stiefel(9, 1), Oblique(5, 3)]


def random_point(man, rng):
    return ManifoldPoint(man.random_point(rng), man)


@pytest.mark.parametrize("man", MANIFOLDS, ids=repr)
class TestCommonGeometry:
    def test_dimensions(self, man):
        assert man.normal_dim + man.tangent_dim == man.ambient_dim

    def test_random_point_feasible(self, man, rng):
        for _ in range(5):
            x = random_point(man, rng)
            assert man.feasibility_residual(x.coords) <= 1e-12

    def test_basis_orthonormal_and_normal(self, man, rng):
        x = random_point(man, rng)
        B = normal_basis(x)
        assert B.shape == (man.ambient_dim, man.normal_dim)
        assert np.linalg.norm(B.T @ B - np.eye(man.normal_dim)) <= 1e-12
        # every basis column is annihilated by the tangent projector
        for j in range(B.shape[1]):
            assert np.linalg.norm(man.proj_tangent(x.coords, B[:, j])) <= 1e-12

    def test_projector_identity(self, man, rng):
        x = random_point(man, rng)
        B = normal_basis(x)
        z = rng.standard_normal(man.ambient_dim)
        pz = man.proj_tangent(x.coords, z)
        # idempotent and complementary to B B^T
        assert np.linalg.norm(man.proj_tangent(x.coords, pz) - pz) <= 1e-12
        assert np.linalg.norm(pz + B @ (B.T @ z) - z) <= 1e-12

    def test_projector_self_adjoint(self, man, rng):
        x = random_point(man, rng)
        a = rng.standard_normal(man.ambient_dim)
        b = rng.standard_normal(man.ambient_dim)
        pa = man.proj_tangent(x.coords, a)
        pb = man.proj_tangent(x.coords, b)
        assert abs(pa @ b - a @ pb) <= 1e-10 * (1 + np.linalg.norm(a) * np.linalg.norm(b))

    def test_retract_zero_and_feasibility(self, man, rng):
        x = random_point(man, rng)
        zero = TangentVector(np.zeros(man.ambient_dim), x)
        assert np.allclose(retract(x, zero).coords, x.coords, atol=1e-15)
        for scale in (0.1, 1.0, 10.0):
            v = TangentVector(scale * man.random_tangent(x.coords, rng), x)
            y = retract(x, v)
            assert man.feasibility_residual(y.coords) <= 1e-12

    def test_retract_first_order(self, man, rng):
        x = random_point(man, rng)
        v = man.random_tangent(x.coords, rng)
        v /= np.linalg.norm(v)
        errs = []
        for h in (1e-2, 1e-3, 1e-4):
            y = man.retract(x.coords, h * v)
            errs.append(np.linalg.norm((y - x.coords) / h - v))
        assert errs[0] < 1e-1
        assert errs[1] < 0.2 * errs[0]  # O(h) decay of the difference quotient
        # second-order agreement of the retraction with x + v
        for h in (1e-1, 1e-2):
            y = man.retract(x.coords, h * v)
            assert np.linalg.norm(y - (x.coords + h * v)) <= 2.0 * h * h

    def test_weingarten_tangent_and_bilinear(self, man, rng):
        x = random_point(man, rng)
        B = normal_basis(x)
        w = TangentVector(man.random_tangent(x.coords, rng), x)
        u = B @ rng.standard_normal(man.normal_dim)
        out = weingarten(x, w, u)
        assert man.normal_component_norm(x.coords, out.coords) <= 1e-10 * (1 + out.norm)
        # bilinearity
        a, b = 0.7, -1.3
        w2 = TangentVector(man.random_tangent(x.coords, rng), x)
        u2 = B @ rng.standard_normal(man.normal_dim)
        lhs = weingarten(x, TangentVector(a * w.coords + b * w2.coords, x), u).coords
        rhs = a * weingarten(x, w, u).coords + b * weingarten(x, w2, u).coords
        assert np.allclose(lhs, rhs, atol=1e-12)
        lhs = weingarten(x, w, a * u + b * u2).coords
        rhs = a * weingarten(x, w, u).coords + b * weingarten(x, w, u2).coords
        assert np.allclose(lhs, rhs, atol=1e-12)
        zero = TangentVector(np.zeros(man.ambient_dim), x)
        assert weingarten(x, zero, u).norm == 0.0

    def test_weingarten_matches_projector_derivative(self, man, rng):
        x = random_point(man, rng)
        B = normal_basis(x)
        for _ in range(10):
            w = man.random_tangent(x.coords, rng)
            w /= np.linalg.norm(w)
            u = B @ rng.standard_normal(man.normal_dim)
            ref = fd_projector_derivative(man, x.coords, w, u)
            got = man.weingarten(x.coords, w, u)
            assert np.linalg.norm(got - ref) <= 1e-6 * max(np.linalg.norm(u), 1.0)

    def test_basis_derivative_identity(self, man, rng):
        # Lambda (DB[w]) lam = -Lambda W(w, B lam) with Lambda = I - B B^T
        x = random_point(man, rng)
        B = normal_basis(x)
        for _ in range(5):
            w = man.random_tangent(x.coords, rng)
            w /= np.linalg.norm(w)
            lam = rng.standard_normal(man.normal_dim)
            dB = fd_basis_derivative(man, x.coords, w)
            lhs = man.proj_tangent(x.coords, dB @ lam)
            rhs = -man.proj_tangent(x.coords, man.weingarten(x.coords, w, B @ lam))
            assert np.linalg.norm(lhs - rhs) <= 1e-6 * (1 + np.linalg.norm(lam))


class TestSphere:
    def test_basis_is_point(self, rng):
        x = random_point(Sphere(5), rng)
        assert np.allclose(normal_basis(x)[:, 0], x.coords)

    def test_projection_of_x_vanishes(self, rng):
        x = random_point(Sphere(5), rng)
        assert proj_tangent(x, x.coords).norm <= 1e-12

    def test_projection_example(self):
        x = ManifoldPoint(np.array([1.0, 0, 0]), Sphere(3))
        v = proj_tangent(x, np.array([1.0, 2.0, 3.0]))
        assert np.allclose(v.coords, [0.0, 2.0, 3.0])

    def test_retraction_example(self):
        x = ManifoldPoint(np.array([1.0, 0, 0]), Sphere(3))
        v = TangentVector(np.array([0.0, 1.0, 0]), x)
        y = retract(x, v)
        assert np.allclose(y.coords, np.array([1.0, 1.0, 0]) / np.sqrt(2))

    def test_weingarten_closed_form(self, rng):
        x = random_point(Sphere(6), rng)
        w = TangentVector(x.manifold.random_tangent(x.coords, rng), x)
        u = 2.7 * x.coords
        out = weingarten(x, w, u)
        assert np.allclose(out.coords, -w.coords * (x.coords @ u), atol=1e-13)

    def test_weingarten_rejects_nonnormal(self, rng):
        x = random_point(Sphere(6), rng)
        w = TangentVector(x.manifold.random_tangent(x.coords, rng), x)
        with pytest.raises(PreconditionError):
            weingarten(x, w, w.coords + 1e-3)


class TestStiefel:
    def test_projection_annihilates_symmetric_multiples(self, rng):
        man = Stiefel(7, 3)
        x = random_point(man, rng)
        X = x.coords.reshape(7, 3, order="F")
        S = rng.standard_normal((3, 3))
        S = (S + S.T) / 2
        z = (X @ S).reshape(-1, order="F")
        assert np.linalg.norm(man.proj_tangent(x.coords, z)) <= 1e-12
        # dense-projector oracle
        B = man.normal_basis(x.coords)
        dense = z - B @ (B.T @ z)
        assert np.linalg.norm(dense) <= 1e-12

    def test_basis_count(self):
        assert Stiefel(8, 3).normal_dim == 6
        assert Stiefel(5, 1).normal_dim == 1

    def test_rank_one_reduces_to_sphere(self, rng):
        st = Stiefel(6, 1)
        sp = Sphere(6)
        coords = sp.random_point(rng)
        z = rng.standard_normal(6)
        assert np.allclose(st.proj_tangent(coords, z), sp.proj_tangent(coords, z))
        assert np.allclose(st.normal_basis(coords), sp.normal_basis(coords))
        v = sp.random_tangent(coords, rng)
        assert np.allclose(st.retract(coords, v), sp.retract(coords, v), atol=1e-14)
        u = 1.3 * coords
        assert np.allclose(st.weingarten(coords, v, u), sp.weingarten(coords, v, u))

    def test_polar_formula(self, rng):
        man = Stiefel(8, 3)
        x = random_point(man, rng)
        V = man.random_tangent(x.coords, rng)
        got = man.retract(x.coords, V)
        Xm = x.coords.reshape(8, 3, order="F")
        Vm = V.reshape(8, 3, order="F")
        import scipy.linalg

        ref = (Xm + Vm) @ scipy.linalg.fractional_matrix_power(
            np.eye(3) + Vm.T @ Vm, -0.5
        ).real
        assert np.linalg.norm(got.reshape(8, 3, order="F") - ref) <= 1e-12


class TestOblique:
    def test_block_diagonal_basis(self, rng):
        man = Oblique(4, 3)
        x = random_point(man, rng)
        B = man.normal_basis(x.coords)
        X = x.coords.reshape(4, 3, order="F")
        for k in range(3):
            col = B[:, k].reshape(4, 3, order="F")
            assert np.allclose(col[:, k], X[:, k])
            other = np.delete(col, k, axis=1)
            assert np.linalg.norm(other) == 0.0

    def test_columnwise_sphere(self, rng):
        man = Oblique(4, 2)
        sp = Sphere(4)
        x = random_point(man, rng)
        X = x.coords.reshape(4, 2, order="F")
        z = rng.standard_normal(8)
        Z = z.reshape(4, 2, order="F")
        got = man.proj_tangent(x.coords, z).reshape(4, 2, order="F")
        for k in range(2):
            assert np.allclose(got[:, k], sp.proj_tangent(X[:, k], Z[:, k]))


class TestTypes:
    def test_manifold_point_rejects_infeasible(self):
        with pytest.raises(FeasibilityError):
            ManifoldPoint(np.array([1.0, 1.0, 0.0]), Sphere(3))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            ManifoldPoint(np.ones(4), Sphere(3))

    def test_tangent_vector_rejects_normal_component(self, rng):
        x = random_point(Sphere(5), rng)
        with pytest.raises(TangencyError):
            TangentVector(x.coords * 0.5, x)

    def test_retract_requires_matching_base(self, rng):
        x = random_point(Sphere(5), rng)
        y = random_point(Sphere(5), rng)
        v = TangentVector(x.manifold.random_tangent(x.coords, rng), x)
        with pytest.raises(PreconditionError):
            retract(y, v)
