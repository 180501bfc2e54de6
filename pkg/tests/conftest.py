import numpy as np
import pytest
from hypothesis import settings

from prgd.manifolds import Euclidean
from prgd.numerics import as_sym_matrix
from prgd.problems import CostFunction, PcaProblem, QuadraticSaddle

settings.register_profile("deterministic", derandomize=True, max_examples=200)
settings.load_profile("deterministic")


class EuclideanQuadratic(CostFunction):
    """1/2 x^T H x on R^d with arbitrary symmetric H; handy for critical-point tests."""

    def __init__(self, matrix):
        self.matrix = as_sym_matrix(matrix)
        self.norm = float(np.abs(np.linalg.eigvalsh(self.matrix)).max())
        self.manifold = Euclidean(self.matrix.shape[0])

    def value(self, x):
        self._check_point(x)
        return 0.5 * float(x.coords @ (self.matrix @ x.coords))

    def euclidean_gradient(self, x):
        self._check_point(x)
        return self.matrix @ x.coords

    def value_many(self, coords):
        return 0.5 * np.einsum("ij,ij->i", coords @ self.matrix, coords)


@pytest.fixture
def diag_pca():
    return PcaProblem(np.diag([3.0, 1.0]))


@pytest.fixture
def pca3():
    return PcaProblem(np.diag([3.0, 1.0, 0.5]))


@pytest.fixture
def simple_saddle():
    return QuadraticSaddle(np.diag([-1.0, 1.0]))


@pytest.fixture
def convex2():
    return EuclideanQuadratic(np.eye(2))
