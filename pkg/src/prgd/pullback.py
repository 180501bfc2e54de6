"""The pullback of a cost through the retraction at a fixed base point."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NumericalError
from .manifolds import Point, Tangent, same_point
from .numerics import DEFAULT_HESS_H


@dataclass(frozen=True)
class Pullback:
    """The composition cost-after-retraction on the tangent space at `base`.

    Values and gradients are exact (the gradient uses the adjoint of the
    retraction differential); Hessians are finite-difference estimates in an
    orthonormal tangent basis, so on the sphere they are intrinsic
    (n-1) x (n-1) matrices.
    """

    problem: object
    base: Point

    def __post_init__(self):
        self.problem._check_point(self.base)

    @property
    def manifold(self):
        return self.base.manifold

    @cached_property
    def basis(self) -> np.ndarray:
        return self.manifold.tangent_basis(self.base)

    def _check_arg(self, s: Tangent):
        if not same_point(s.base, self.base):
            raise ValueError("tangent vector is not based at the pullback's base point")

    def value(self, s: Tangent) -> float:
        self._check_arg(s)
        return self.problem.value(self.manifold.retract(self.base, s))

    def gradient(self, s: Tangent) -> Tangent:
        """Adjoint of the retraction differential applied to the downstream gradient."""
        self._check_arg(s)
        y = self.manifold.retract(self.base, s)
        grad_y = self.problem.riemannian_gradient(y)
        return self.manifold.retraction_adjoint(self.base, s, grad_y)

    def value_many(self, tangents: np.ndarray) -> np.ndarray:
        """Values at rows of `tangents` (ambient tangent coordinates at the base)."""
        points = self.manifold.retract_many(self.base.coords, np.asarray(tangents, dtype=float))
        return self.problem.value_many(points)

    def hessian_at_zero(self, h: float = DEFAULT_HESS_H) -> np.ndarray:
        """Finite-difference Hessian at the tangent-space origin, in the orthonormal basis."""
        return self._fd_hessian_intrinsic(np.zeros(self.manifold.intrinsic_dim), h)

    def hessian_at(self, s: Tangent, h: float = DEFAULT_HESS_H) -> np.ndarray:
        """Finite-difference Hessian at a tangent point, in the same orthonormal basis."""
        self._check_arg(s)
        return self._fd_hessian_intrinsic(self.basis.T @ s.coords, h)

    def _fd_hessian_intrinsic(self, center: np.ndarray, h: float) -> np.ndarray:
        if not (h > 0):
            raise ValueError("finite-difference step h must be positive")
        k = self.manifold.intrinsic_dim
        pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
        offsets = np.zeros((1 + 2 * k + 4 * len(pairs), k))
        for i in range(k):
            offsets[1 + 2 * i, i] = h
            offsets[2 + 2 * i, i] = -h
        row = 1 + 2 * k
        for i, j in pairs:
            for si, sj in ((h, h), (h, -h), (-h, h), (-h, -h)):
                offsets[row, i] = si
                offsets[row, j] = sj
                row += 1
        vals = self.value_many((center + offsets) @ self.basis.T)
        if not np.all(np.isfinite(vals)):
            raise NumericalError("pullback returned non-finite values during Hessian estimation")
        hess = np.empty((k, k))
        f0 = vals[0]
        for i in range(k):
            hess[i, i] = (vals[1 + 2 * i] - 2.0 * f0 + vals[2 + 2 * i]) / (h * h)
        row = 1 + 2 * k
        for i, j in pairs:
            val = (vals[row] - vals[row + 1] - vals[row + 2] + vals[row + 3]) / (4.0 * h * h)
            hess[i, j] = val
            hess[j, i] = val
            row += 4
        return 0.5 * (hess + hess.T)
