"""Sparse PCA objectives and the data generators used by the benchmarks.

The objective over the sphere (r = 1) or Stiefel manifold is

    F(X) = -trace(X^T A^T A X) + mu ||X||_1,

so f(X) = -||A X||_F^2 with Euclidean gradient -2 A^T A X and constant
Hessian action V -> -2 A^T A V.  The Gram matrix A^T A is cached only for
n <= 2000; above that, gradient and Hessian actions use A^T (A X)
products, keeping the per-iteration cost at O(m n) flops per column.
"""

from __future__ import annotations

import numpy as np

from .exceptions import PreconditionError
from .manifolds import Array, ManifoldPoint, Sphere, Stiefel

#: Largest n for which A^T A is formed explicitly.
GRAM_CACHE_LIMIT = 2000


def spectral_norm(A: Array) -> float:
    """Largest singular value, via the Gram matrix of the smaller side."""
    m, n = A.shape
    G = A @ A.T if m <= n else A.T @ A
    if min(m, n) <= 4000:
        return float(np.sqrt(max(np.linalg.eigvalsh(G)[-1], 0.0)))
    import scipy.sparse.linalg

    val = scipy.sparse.linalg.eigsh(G, k=1, which="LA", return_eigenvectors=False)
    return float(np.sqrt(max(val[0], 0.0)))


class SparsePCAProblem:
    """Immutable problem data; safe to share across solver threads."""

    def __init__(self, A: Array, mu: float, r: int = 1):
        if mu < 0:
            raise PreconditionError("mu must be nonnegative")
        if r < 1:
            raise PreconditionError("r must be at least 1")
        self.A = np.ascontiguousarray(A, dtype=np.float64)
        self.m, self.n = self.A.shape
        self.mu = float(mu)
        self.r = int(r)
        self.manifold = Sphere(self.n) if r == 1 else Stiefel(self.n, r)
        self.gram = self.A.T @ self.A if self.n <= GRAM_CACHE_LIMIT else None
        self._norm2 = spectral_norm(self.A)

    def __repr__(self):
        return f"SparsePCAProblem(m={self.m}, n={self.n}, r={self.r}, mu={self.mu})"

    @property
    def default_t(self) -> float:
        """Step parameter 1 / (2 ||A||_2^2), i.e. the inverse of the
        Lipschitz constant of the smooth gradient."""
        return 1.0 / (2.0 * self._norm2**2)

    def _mat(self, coords) -> Array:
        return np.asarray(coords, dtype=np.float64).reshape(self.n, self.r, order="F")

    def _gram_apply(self, X: Array) -> Array:
        if self.gram is not None:
            return self.gram @ X
        return self.A.T @ (self.A @ X)

    def f(self, coords) -> float:
        AX = self.A @ self._mat(coords)
        return -float(np.sum(AX * AX))

    def egrad(self, coords) -> Array:
        X = self._mat(coords)
        return (-2.0 * self._gram_apply(X)).reshape(-1, order="F")

    def ehess(self, coords, w) -> Array:
        W = self._mat(w)
        return (-2.0 * self._gram_apply(W)).reshape(-1, order="F")

    def objective(self, coords) -> float:
        """Full nonsmooth objective f + mu ||x||_1."""
        c = np.asarray(coords, dtype=np.float64).reshape(-1)
        return self.f(c) + self.mu * float(np.abs(c).sum())

    def random_point(self, rng: np.random.Generator) -> ManifoldPoint:
        return ManifoldPoint(self.manifold.random_point(rng), self.manifold)


# ---------------------------------------------------------------------------
# Data generators


def gen_random(m: int, n: int, seed: int) -> Array:
    """m x n matrix with i.i.d. standard normal entries; reproducible."""
    if m < 1 or n < 1:
        raise PreconditionError("matrix dimensions must be positive")
    return np.random.default_rng(seed).standard_normal((m, n))


def normalize_columns(A: Array) -> Array:
    """Center each column and scale it to unit norm.

    The standard sparse-PCA benchmark preprocessing: it puts the gradient
    entries and the l1 threshold mu on comparable scales, which the
    reported objective and sparsity levels of the benchmark tables
    presuppose.  Raw N(0,1) data at m = 50 makes mu of order one
    negligible and the solutions dense.
    """
    A = np.asarray(A, dtype=np.float64)
    A = A - A.mean(axis=0)
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0.0):
        raise PreconditionError("cannot normalize a zero column")
    return A / norms


def gen_handcrafted(seed: int, noise: float = 0.1):
    """The adversarial 3 x 6 instance separating the naive baseline.

    A = Sigma U^T + noise * R1 with Sigma = diag(20, 0.1, 0.05) and
    U = [I_3; 0_3]; the start point is normalize(e_1 + noise * R2).
    With noise = 0 the top eigenvector of A^T A is exactly e_1.
    Returns (A, x0) with x0 on Sphere(6).
    """
    rng = np.random.default_rng(seed)
    sigma = np.diag([20.0, 0.1, 0.05])
    U = np.vstack([np.eye(3), np.zeros((3, 3))])
    A = sigma @ U.T + noise * rng.standard_normal((3, 6))
    x_star = np.zeros(6)
    x_star[0] = 1.0
    x0 = x_star + noise * rng.standard_normal(6)
    x0 /= np.linalg.norm(x0)
    return A, ManifoldPoint(x0, Sphere(6))


#: Five fixed sparse component patterns on the unit index line, each given
#: as (start_fraction, end_fraction, value) segments.  Boxes and steps,
#: partly overlapping, so the noise-free matrix has rank <= 5 and exactly
#: five distinct rows.
SYNTHETIC_COMPONENTS = (
    ((0.00, 0.10, 1.0),),
    ((0.10, 0.20, -1.0),),
    ((0.20, 0.30, 1.0), (0.30, 0.40, 0.5)),
    ((0.35, 0.50, 1.0),),
    ((0.50, 0.60, -0.5), (0.60, 0.70, -1.0), (0.70, 0.80, 0.5)),
)


def synthetic_components(n: int) -> Array:
    """The 5 x n noise-free component rows."""
    P = np.zeros((5, n))
    for k, segments in enumerate(SYNTHETIC_COMPONENTS):
        for lo, hi, val in segments:
            P[k, int(round(lo * n)) : int(round(hi * n))] = val
    return P


def gen_synthetic(m: int, n: int, seed: int, noise_var: float = 0.25) -> Array:
    """Synthetic data: each component row repeated m/5 times plus
    N(0, noise_var) noise.  m must be divisible by 5."""
    if m % 5 != 0:
        raise PreconditionError("m must be divisible by 5")
    P = synthetic_components(n)
    clean = np.repeat(P, m // 5, axis=0)
    rng = np.random.default_rng(seed)
    return clean + np.sqrt(noise_var) * rng.standard_normal((m, n))


def sparsity(x) -> float:
    """Fraction of exactly-zero entries (the prox produces exact zeros)."""
    x = np.asarray(x).reshape(-1)
    return float(np.count_nonzero(x == 0.0)) / x.size
