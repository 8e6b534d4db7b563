"""Embedded-submanifold geometry for the sphere, Stiefel and oblique manifolds.

Points and tangent vectors live in ambient coordinates as flat float64
arrays; Stiefel and oblique points are stored column-stacked (Fortran
order) so that entrywise operations such as soft thresholding act on the
same layout the l1 penalty sees.  Matrix-shaped operations reshape
internally.

Every manifold provides the orthonormal normal-space basis ``B_x``, the
tangent projector ``z - B_x B_x^T z``, a retraction, and the Weingarten
map (the derivative of the tangent projector along a tangent direction,
applied to a normal vector).  The map ``x -> B_x`` is a fixed smooth
formula per manifold, so it is continuous along curves: no sign or
ordering flips under small perturbations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .exceptions import (
    DimensionMismatch,
    FeasibilityError,
    PreconditionError,
    TangencyError,
)

Array = NDArray[np.float64]

#: Feasibility residual allowed for a ManifoldPoint.
FEASIBILITY_TOL = 1e-12
#: Normal-component residual allowed for a TangentVector, relative to 1 + |v|.
TANGENCY_TOL = 1e-10
#: Tolerance for the normality precondition of the Weingarten map.
NORMALITY_TOL = 1e-10


def _as_coords(z, ambient_dim: int) -> Array:
    z = np.ascontiguousarray(z, dtype=np.float64).reshape(-1)
    if z.size != ambient_dim:
        raise DimensionMismatch(
            f"expected ambient vector of length {ambient_dim}, got {z.size}"
        )
    return z


class Manifold:
    """Common interface; concrete geometry lives in the subclasses.

    All methods are pure functions of their array inputs and perform no
    caching, so instances are safe to share between threads.
    """

    ambient_dim: int
    normal_dim: int

    @property
    def tangent_dim(self) -> int:
        return self.ambient_dim - self.normal_dim

    # -- residuals ----------------------------------------------------

    def feasibility_residual(self, coords: Array) -> float:
        raise NotImplementedError

    def normal_component_norm(self, coords: Array, v: Array) -> float:
        """||B_x^T v||, via the closed form of each geometry."""
        raise NotImplementedError

    # -- core operations ----------------------------------------------

    def normal_basis(self, coords: Array) -> Array:
        """Orthonormal basis of the normal space, shape (ambient_dim, d)."""
        raise NotImplementedError

    def proj_tangent(self, coords: Array, z: Array) -> Array:
        """Orthogonal projection of ambient z onto the tangent space."""
        raise NotImplementedError

    def retract(self, coords: Array, v: Array) -> Array:
        raise NotImplementedError

    def weingarten(self, coords: Array, w: Array, u: Array) -> Array:
        raise NotImplementedError

    # -- random elements ----------------------------------------------

    def random_point(self, rng: np.random.Generator) -> Array:
        raise NotImplementedError

    def random_tangent(self, coords: Array, rng: np.random.Generator) -> Array:
        return self.proj_tangent(coords, rng.standard_normal(self.ambient_dim))

    def _check(self, z) -> Array:
        return _as_coords(z, self.ambient_dim)


class Sphere(Manifold):
    """Unit sphere S^{n-1} embedded in R^n.  Normal space is span(x)."""

    def __init__(self, n: int):
        if n < 2:
            raise ValueError("sphere needs ambient dimension >= 2")
        self.n = n
        self.ambient_dim = n
        self.normal_dim = 1

    def __repr__(self):
        return f"Sphere({self.n})"

    def __eq__(self, other):
        return isinstance(other, Sphere) and other.n == self.n

    def __hash__(self):
        return hash(("Sphere", self.n))

    def feasibility_residual(self, coords) -> float:
        x = self._check(coords)
        return abs(float(np.linalg.norm(x)) - 1.0)

    def normal_component_norm(self, coords, v) -> float:
        return abs(float(self._check(coords) @ self._check(v)))

    def normal_basis(self, coords) -> Array:
        return self._check(coords).reshape(-1, 1).copy()

    def proj_tangent(self, coords, z) -> Array:
        x = self._check(coords)
        z = self._check(z)
        return z - x * (x @ z)

    def retract(self, coords, v) -> Array:
        y = self._check(coords) + self._check(v)
        return y / np.linalg.norm(y)

    def weingarten(self, coords, w, u) -> Array:
        x = self._check(coords)
        w = self._check(w)
        u = self._check(u)
        return -w * (x @ u)

    def random_point(self, rng) -> Array:
        x = rng.standard_normal(self.n)
        return x / np.linalg.norm(x)


class Stiefel(Manifold):
    """Stiefel manifold St(n, r) of n-by-r matrices with orthonormal columns.

    Coordinates are vec(X) with columns stacked.  The normal space at X is
    {X S : S symmetric}; its orthonormal basis uses the fixed ordering of
    the symmetric-matrix basis: E_11, ..., E_rr, then (e_i e_j^T +
    e_j e_i^T)/sqrt(2) for i < j in row-major order.  St(n, 1) reduces to
    Sphere(n) in every operation.
    """

    def __init__(self, n: int, r: int):
        if r < 1 or n < r:
            raise ValueError("Stiefel(n, r) needs 1 <= r <= n")
        self.n = n
        self.r = r
        self.ambient_dim = n * r
        self.normal_dim = r * (r + 1) // 2

    def __repr__(self):
        return f"Stiefel({self.n}, {self.r})"

    def __eq__(self, other):
        return isinstance(other, Stiefel) and (other.n, other.r) == (self.n, self.r)

    def __hash__(self):
        return hash(("Stiefel", self.n, self.r))

    def _mat(self, coords: Array) -> Array:
        return coords.reshape(self.n, self.r, order="F")

    def _vec(self, mat: Array) -> Array:
        return mat.reshape(-1, order="F")

    def feasibility_residual(self, coords) -> float:
        X = self._mat(self._check(coords))
        return float(np.linalg.norm(X.T @ X - np.eye(self.r)))

    def normal_component_norm(self, coords, v) -> float:
        X = self._mat(self._check(coords))
        V = self._mat(self._check(v))
        S = X.T @ V
        return float(np.linalg.norm((S + S.T) / 2.0))

    def normal_basis(self, coords) -> Array:
        X = self._mat(self._check(coords))
        n, r = self.n, self.r
        B = np.empty((self.ambient_dim, self.normal_dim))
        col = 0
        for i in range(r):  # diagonal elements first
            E = np.zeros((r, r))
            E[i, i] = 1.0
            B[:, col] = self._vec(X @ E)
            col += 1
        inv_sqrt2 = 1.0 / np.sqrt(2.0)
        for i in range(r):  # off-diagonals, row-major
            for j in range(i + 1, r):
                E = np.zeros((r, r))
                E[i, j] = inv_sqrt2
                E[j, i] = inv_sqrt2
                B[:, col] = self._vec(X @ E)
                col += 1
        return B

    def proj_tangent(self, coords, z) -> Array:
        X = self._mat(self._check(coords))
        Z = self._mat(self._check(z))
        S = X.T @ Z
        return self._vec(Z - X @ ((S + S.T) / 2.0))

    def retract(self, coords, v) -> Array:
        """Polar retraction (X + V)(Y^T Y)^{-1/2} with Y = X + V.

        Using the exact Gram of Y instead of I + V^T V keeps the result
        feasible to machine precision even when V carries a tiny normal
        component from an inexact subproblem solve.
        """
        Y = self._mat(self._check(coords) + self._check(v))
        G = Y.T @ Y
        d, Q = np.linalg.eigh(G)
        inv_sqrt = (Q / np.sqrt(d)) @ Q.T
        return self._vec(Y @ inv_sqrt)

    def weingarten(self, coords, w, u) -> Array:
        X = self._mat(self._check(coords))
        W = self._mat(self._check(w))
        U = self._mat(self._check(u))
        XtU = X.T @ U
        WtU = W.T @ U
        return self._vec(-W @ ((XtU + XtU.T) / 2.0) - X @ ((WtU + WtU.T) / 2.0))

    def random_point(self, rng) -> Array:
        Q, _ = np.linalg.qr(rng.standard_normal((self.n, self.r)))
        return self._vec(Q)


class Oblique(Manifold):
    """Oblique manifold OB(n, p): p independent unit spheres in R^n.

    Coordinates are the p columns stacked; the normal basis is block
    diagonal with the k-th column placed in the k-th block.
    """

    def __init__(self, n: int, p: int):
        if n < 2 or p < 1:
            raise ValueError("Oblique(n, p) needs n >= 2 and p >= 1")
        self.n = n
        self.p = p
        self.ambient_dim = n * p
        self.normal_dim = p

    def __repr__(self):
        return f"Oblique({self.n}, {self.p})"

    def __eq__(self, other):
        return isinstance(other, Oblique) and (other.n, other.p) == (self.n, self.p)

    def __hash__(self):
        return hash(("Oblique", self.n, self.p))

    def _mat(self, coords: Array) -> Array:
        return coords.reshape(self.n, self.p, order="F")

    def _vec(self, mat: Array) -> Array:
        return mat.reshape(-1, order="F")

    def feasibility_residual(self, coords) -> float:
        X = self._mat(self._check(coords))
        return float(np.max(np.abs(np.linalg.norm(X, axis=0) - 1.0)))

    def normal_component_norm(self, coords, v) -> float:
        X = self._mat(self._check(coords))
        V = self._mat(self._check(v))
        return float(np.linalg.norm(np.sum(X * V, axis=0)))

    def normal_basis(self, coords) -> Array:
        X = self._mat(self._check(coords))
        B = np.zeros((self.ambient_dim, self.p))
        for k in range(self.p):
            B[k * self.n : (k + 1) * self.n, k] = X[:, k]
        return B

    def proj_tangent(self, coords, z) -> Array:
        X = self._mat(self._check(coords))
        Z = self._mat(self._check(z))
        return self._vec(Z - X * np.sum(X * Z, axis=0))

    def retract(self, coords, v) -> Array:
        Y = self._mat(self._check(coords) + self._check(v))
        return self._vec(Y / np.linalg.norm(Y, axis=0))

    def weingarten(self, coords, w, u) -> Array:
        X = self._mat(self._check(coords))
        W = self._mat(self._check(w))
        U = self._mat(self._check(u))
        return self._vec(-W * np.sum(X * U, axis=0))

    def random_point(self, rng) -> Array:
        X = rng.standard_normal((self.n, self.p))
        return self._vec(X / np.linalg.norm(X, axis=0))


# ---------------------------------------------------------------------------
# Typed wrappers


@dataclass(frozen=True)
class ManifoldPoint:
    """Ambient coordinates tagged with their manifold; feasibility is
    validated on construction (residual <= FEASIBILITY_TOL)."""

    coords: Array
    manifold: Manifold

    def __post_init__(self):
        coords = _as_coords(self.coords, self.manifold.ambient_dim)
        object.__setattr__(self, "coords", coords)
        res = self.manifold.feasibility_residual(coords)
        if not res <= FEASIBILITY_TOL:
            raise FeasibilityError(
                f"point is off {self.manifold!r}: feasibility residual {res:.3e}"
            )

    @property
    def ambient_dim(self) -> int:
        return self.manifold.ambient_dim


@dataclass(frozen=True)
class TangentVector:
    """Ambient coordinates of a tangent vector at ``base``; the normal
    component must satisfy ||B_x^T v|| <= TANGENCY_TOL * (1 + ||v||)."""

    coords: Array
    base: ManifoldPoint

    def __post_init__(self):
        coords = _as_coords(self.coords, self.base.ambient_dim)
        object.__setattr__(self, "coords", coords)
        res = self.base.manifold.normal_component_norm(self.base.coords, coords)
        if not res <= TANGENCY_TOL * (1.0 + float(np.linalg.norm(coords))):
            raise TangencyError(
                f"vector is not tangent at its base: normal component {res:.3e}"
            )

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))


# ---------------------------------------------------------------------------
# Operation-level API on the typed wrappers


def proj_tangent(x: ManifoldPoint, z) -> TangentVector:
    """Project an ambient vector onto T_x M.  Idempotent and self-adjoint."""
    return TangentVector(x.manifold.proj_tangent(x.coords, z), x)


def normal_basis(x: ManifoldPoint) -> Array:
    """Orthonormal basis B_x of the normal space (ambient_dim x d)."""
    return x.manifold.normal_basis(x.coords)


def retract(x: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    if v.base is not x and not np.array_equal(v.base.coords, x.coords):
        raise PreconditionError("tangent vector is based at a different point")
    return ManifoldPoint(x.manifold.retract(x.coords, v.coords), x.manifold)


def weingarten(x: ManifoldPoint, w: TangentVector, u) -> TangentVector:
    """Weingarten map W_x(w, u); ``u`` must be a normal vector at x."""
    u = _as_coords(u, x.manifold.ambient_dim)
    unorm = float(np.linalg.norm(u))
    tang = float(np.linalg.norm(x.manifold.proj_tangent(x.coords, u)))
    if tang > NORMALITY_TOL * max(unorm, 1e-300):
        raise PreconditionError(
            f"u is not a normal vector: tangent part {tang:.3e} vs ||u|| {unorm:.3e}"
        )
    return TangentVector(x.manifold.weingarten(x.coords, w.coords, u), x)
