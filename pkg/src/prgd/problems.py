"""Concrete cost functions: dominant eigenvector on the sphere, Euclidean quadratic saddle."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .manifolds import Euclidean, Manifold, Point, Sphere, Tangent
from .numerics import RngStream, as_sym_matrix, as_vector, operator_norm


class CostFunction:
    """Interface: value and ambient gradient of a cost on a manifold.

    Subclasses set `manifold` and implement `value` and `euclidean_gradient`;
    the Riemannian gradient is the tangent projection of the ambient one.
    """

    manifold: Manifold

    def value(self, x: Point) -> float:
        raise NotImplementedError

    def euclidean_gradient(self, x: Point) -> np.ndarray:
        raise NotImplementedError

    def riemannian_gradient(self, x: Point) -> Tangent:
        return self.manifold.project(x, self.euclidean_gradient(x))

    def value_many(self, coords: np.ndarray) -> np.ndarray:
        """Values at rows of `coords` (manifold points in ambient coordinates)."""
        return np.array([self.value(self.manifold.point(row)) for row in coords])

    def _check_point(self, x: Point):
        if x.manifold != self.manifold:
            raise ValueError(
                f"point lives on {x.manifold.name}, but the cost is defined on {self.manifold.name}"
            )


@dataclass(frozen=True)
class ProblemConstants:
    lip_grad: float
    lip_hess: float
    ball_hint: float


class PcaProblem(CostFunction):
    """f(x) = -1/2 x^T A x on the unit sphere (minimization of the negated Rayleigh quotient).

    The dominant eigenvector of A is the global minimizer; every other unit
    eigenvector is a critical point.
    """

    def __init__(self, matrix):
        matrix = as_sym_matrix(matrix)
        if matrix.shape[0] < 2:
            raise ValueError("PCA needs an ambient dimension of at least 2")
        self.matrix = matrix
        self.norm = operator_norm(matrix)
        self.manifold = Sphere(matrix.shape[0])

    def value(self, x: Point) -> float:
        self._check_point(x)
        return -0.5 * float(x.coords @ (self.matrix @ x.coords))

    def euclidean_gradient(self, x: Point) -> np.ndarray:
        self._check_point(x)
        return -(self.matrix @ x.coords)

    def value_many(self, coords: np.ndarray) -> np.ndarray:
        return -0.5 * np.einsum("ij,ij->i", coords @ self.matrix, coords)

    def constants(self) -> ProblemConstants:
        """Lipschitz constants valid on every tangent space (no ball restriction)."""
        return ProblemConstants(
            lip_grad=2.5 * self.norm,
            lip_hess=9.0 * self.norm,
            ball_hint=math.inf,
        )


class QuadraticSaddle(CostFunction):
    """f(x) = 1/2 x^T H x on R^d, with H indefinite so the origin is a strict saddle."""

    def __init__(self, matrix):
        matrix = as_sym_matrix(matrix)
        if float(np.linalg.eigvalsh(matrix).min()) >= 0.0:
            raise ValueError("quadratic saddle requires at least one negative eigenvalue")
        self.matrix = matrix
        self.norm = operator_norm(matrix)
        self.manifold = Euclidean(matrix.shape[0])

    def value(self, x: Point) -> float:
        self._check_point(x)
        return 0.5 * float(x.coords @ (self.matrix @ x.coords))

    def euclidean_gradient(self, x: Point) -> np.ndarray:
        self._check_point(x)
        return self.matrix @ x.coords

    def value_many(self, coords: np.ndarray) -> np.ndarray:
        return 0.5 * np.einsum("ij,ij->i", coords @ self.matrix, coords)


def load_matrix(path) -> np.ndarray:
    """Read a symmetric matrix from the text format: a line with n, then n rows.

    '#' starts a comment; minor asymmetry (<= 1e-9 relative) is symmetrized as
    (M + M^T)/2, anything larger is rejected.
    """
    rows = []
    n = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            tokens = text.split()
            if n is None:
                if len(tokens) != 1:
                    raise ValueError(f"{path}:{lineno}: expected a single dimension, got {len(tokens)} tokens")
                try:
                    n = int(tokens[0])
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: dimension {tokens[0]!r} is not an integer") from None
                if n < 1:
                    raise ValueError(f"{path}:{lineno}: dimension must be positive, got {n}")
                continue
            if len(rows) == n:
                raise ValueError(f"{path}:{lineno}: extra data after {n} matrix rows")
            if len(tokens) != n:
                raise ValueError(f"{path}:{lineno}: expected {n} entries, got {len(tokens)}")
            try:
                row = [float(tok) for tok in tokens]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: row contains a non-numeric entry") from None
            if not all(math.isfinite(v) for v in row):
                raise ValueError(f"{path}:{lineno}: row contains a non-finite entry")
            rows.append(row)
    if n is None:
        raise ValueError(f"{path}: no matrix dimension found")
    if len(rows) != n:
        raise ValueError(f"{path}: expected {n} rows, found {len(rows)}")
    m = np.array(rows)
    scale = max(float(np.abs(m).max()), 1.0)
    asym = float(np.abs(m - m.T).max())
    if asym > 1e-9 * scale:
        raise ValueError(f"{path}: matrix asymmetry {asym:.3e} exceeds 1e-9 relative tolerance")
    return 0.5 * (m + m.T)


def save_matrix(path, matrix):
    """Write a matrix in the load_matrix text format with round-trip-exact floats."""
    m = np.asarray(matrix, dtype=float)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{m.shape[0]}\n")
        for row in m:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def synthetic_matrix(dim: int, rng: RngStream):
    """Rotated diagonal with spectrum 2, 1, 1 - 1/dim, ..., and known eigenpairs.

    Returns (matrix, eigenvalues descending, eigenvector columns, advanced rng).
    The top gap is exactly 1 and the matrix stays positive definite.
    """
    if dim < 2:
        raise ValueError("synthetic spectrum needs dim >= 2")
    lams = np.empty(dim)
    lams[0] = 2.0
    for k in range(2, dim + 1):
        lams[k - 1] = 1.0 - (k - 2) / dim
    gauss, rng = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(gauss)
    q = q * np.sign(np.diag(r))
    a = (q * lams) @ q.T
    a = 0.5 * (a + a.T)
    return a, lams, q, rng


def start_vector(path) -> np.ndarray:
    """Read a start point as whitespace-separated floats ('#' comments allowed)."""
    tokens = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            for tok in text.split():
                try:
                    tokens.append(float(tok))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-numeric entry {tok!r}") from None
    if not tokens:
        raise ValueError(f"{path}: no start coordinates found")
    return as_vector(tokens)
