"""Euclidean space and the unit sphere as retraction-equipped manifolds.

Points and tangent vectors are stored in ambient coordinates. Tangent vectors
are re-projected after arithmetic and sphere points re-normalized after every
retraction, so invariants hold over long runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import RngStream, as_vector, sample_unit_ball

POINT_NORM_TOL = 1e-12
TANGENT_TOL = 1e-10


@dataclass(frozen=True)
class Point:
    manifold: "Manifold"
    coords: np.ndarray


@dataclass(frozen=True)
class Tangent:
    base: Point
    coords: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))


def same_point(a: Point, b: Point) -> bool:
    return a.manifold == b.manifold and np.array_equal(a.coords, b.coords)


class Manifold:
    """Common interface: metric, projection, retraction, adjoint, ball sampling."""

    name = "abstract"
    ambient_dim = 0
    intrinsic_dim = 0

    def point(self, coords) -> Point:
        raise NotImplementedError

    def _project_array(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _retract_array(self, x: np.ndarray, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def retract_many(self, x: np.ndarray, tangents: np.ndarray) -> np.ndarray:
        """Retract each row of `tangents` from base coordinates x."""
        raise NotImplementedError

    def _check_point(self, x: Point, role: str = "point"):
        if x.manifold != self:
            raise ValueError(f"{role} belongs to manifold {x.manifold.name}, expected {self.name}")

    def _check_tangent(self, s: Tangent, role: str = "tangent"):
        self._check_point(s.base, role=f"base of {role}")
        if s.coords.shape != (self.ambient_dim,):
            raise ValueError(f"{role} has shape {s.coords.shape}, expected ({self.ambient_dim},)")

    def tangent(self, base: Point, coords) -> Tangent:
        """Wrap validated coordinates as a tangent vector at `base`."""
        self._check_point(base)
        return Tangent(base, as_vector(coords))

    def zero_tangent(self, x: Point) -> Tangent:
        self._check_point(x)
        return Tangent(x, np.zeros(self.ambient_dim))

    def inner(self, u: Tangent, v: Tangent) -> float:
        """Riemannian inner product (induced ambient dot product)."""
        if not same_point(u.base, v.base):
            raise ValueError("inner product requires tangents at the same base point")
        return float(u.coords @ v.coords)

    def project(self, x: Point, v) -> Tangent:
        """Orthogonal projection of an ambient vector onto the tangent space at x."""
        self._check_point(x)
        v = as_vector(v)
        if v.shape != (self.ambient_dim,):
            raise ValueError(f"vector has shape {v.shape}, expected ({self.ambient_dim},)")
        return Tangent(x, self._project_array(x.coords, v))

    def retract(self, x: Point, s: Tangent) -> Point:
        self._check_tangent(s)
        if not same_point(s.base, x):
            raise ValueError("tangent vector is not based at the retraction point")
        return Point(self, self._retract_array(x.coords, s.coords))

    def retraction_adjoint(self, x: Point, s: Tangent, w: Tangent) -> Tangent:
        """Adjoint of the retraction differential, pulling w at Retr_x(s) back to x."""
        raise NotImplementedError

    def _check_adjoint_args(self, x: Point, s: Tangent, w: Tangent):
        self._check_tangent(s)
        if not same_point(s.base, x):
            raise ValueError("tangent vector is not based at x")
        y = self._retract_array(x.coords, s.coords)
        if not (w.base.manifold == self and np.array_equal(w.base.coords, y)):
            raise ValueError("w must be a tangent vector at Retr_x(s)")

    def sample_ball(self, x: Point, radius: float, rng: RngStream) -> tuple[Tangent, RngStream]:
        """Uniform draw from the tangent ball of the given radius at x."""
        raise NotImplementedError

    def tangent_basis(self, x: Point) -> np.ndarray:
        """Orthonormal basis of the tangent space at x, columns in ambient coordinates."""
        raise NotImplementedError

    def check_second_order(self, x: Point, s: Tangent, h: float = 1e-4) -> float:
        """Finite-difference norm of the intrinsic initial acceleration of t -> Retr_x(t s).

        Requires a unit tangent s; a second-order retraction returns ~0.
        """
        self._check_tangent(s)
        if abs(s.norm - 1.0) > 1e-9:
            raise ValueError("check_second_order requires a unit tangent vector")
        if not (h > 0):
            raise ValueError("h must be positive")
        gp = self._retract_array(x.coords, h * s.coords)
        gm = self._retract_array(x.coords, -h * s.coords)
        acc = (gp - 2.0 * x.coords + gm) / (h * h)
        return float(np.linalg.norm(self._project_array(x.coords, acc)))


@dataclass(frozen=True)
class Euclidean(Manifold):
    """R^d with the identity retraction Retr_x(s) = x + s."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("Euclidean dimension must be at least 1")

    @property
    def name(self):
        return f"euclidean({self.dim})"

    @property
    def ambient_dim(self):
        return self.dim

    @property
    def intrinsic_dim(self):
        return self.dim

    def point(self, coords) -> Point:
        c = as_vector(coords)
        if c.shape != (self.dim,):
            raise ValueError(f"point has shape {c.shape}, expected ({self.dim},)")
        return Point(self, c)

    def _project_array(self, x, v):
        return v

    def _retract_array(self, x, s):
        return x + s

    def retract_many(self, x, tangents):
        return x + tangents

    def retraction_adjoint(self, x, s, w):
        self._check_adjoint_args(x, s, w)
        return Tangent(x, w.coords)

    def sample_ball(self, x, radius, rng):
        self._check_point(x)
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        ball, rng = sample_unit_ball(self.dim, rng)
        return Tangent(x, radius * ball), rng

    def tangent_basis(self, x):
        self._check_point(x)
        return np.eye(self.dim)

    def check_second_order(self, x, s, h: float = 1e-4) -> float:
        # radial curves are straight lines; the acceleration is identically zero
        self._check_tangent(s)
        if abs(s.norm - 1.0) > 1e-9:
            raise ValueError("check_second_order requires a unit tangent vector")
        return 0.0


@dataclass(frozen=True)
class Sphere(Manifold):
    """Unit sphere S^(n-1) in R^n with the metric-projection retraction."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("sphere ambient dimension must be at least 2")

    @property
    def name(self):
        return f"sphere({self.n})"

    @property
    def ambient_dim(self):
        return self.n

    @property
    def intrinsic_dim(self):
        return self.n - 1

    def point(self, coords) -> Point:
        c = as_vector(coords)
        if c.shape != (self.n,):
            raise ValueError(f"point has shape {c.shape}, expected ({self.n},)")
        nrm = float(np.linalg.norm(c))
        if abs(nrm - 1.0) > POINT_NORM_TOL:
            raise ValueError(f"sphere point must have unit norm, got {nrm!r}")
        return Point(self, c)

    def tangent(self, base: Point, coords) -> Tangent:
        self._check_point(base)
        c = as_vector(coords)
        if c.shape != (self.n,):
            raise ValueError(f"tangent has shape {c.shape}, expected ({self.n},)")
        align = abs(float(base.coords @ c))
        if align > TANGENT_TOL * (1.0 + float(np.linalg.norm(c))):
            raise ValueError(f"vector is not tangent to the sphere at the base point (x.s = {align:.3e})")
        return Tangent(base, c)

    def _project_array(self, x, v):
        return v - (x @ v) * x

    def _retract_array(self, x, s):
        y = x + s
        return y / np.linalg.norm(y)

    def retract_many(self, x, tangents):
        y = x + tangents
        return y / np.linalg.norm(y, axis=1, keepdims=True)

    def retraction_adjoint(self, x, s, w):
        self._check_adjoint_args(x, s, w)
        scale = float(np.linalg.norm(x.coords + s.coords))
        return Tangent(x, self._project_array(x.coords, w.coords) / scale)

    def sample_ball(self, x, radius, rng):
        self._check_point(x)
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        ball, rng = sample_unit_ball(self.intrinsic_dim, rng)
        ambient = self.tangent_basis(x) @ (radius * ball)
        ambient = self._project_array(x.coords, ambient)
        nrm = float(np.linalg.norm(ambient))
        if nrm > radius:  # pragma: no cover - round-off guard
            ambient = ambient * (radius / nrm)
        return Tangent(x, ambient), rng

    def tangent_basis(self, x):
        """Orthonormal basis of x-perp: Gram-Schmidt of canonical vectors against x.

        Deterministic given coordinates; the canonical direction with the
        largest |x_i| is dropped, the rest are orthogonalized twice.
        """
        self._check_point(x)
        xc = x.coords
        pivot = int(np.argmax(np.abs(xc)))
        basis = np.empty((self.n, self.n - 1))
        col = 0
        for i in range(self.n):
            if i == pivot:
                continue
            v = -xc[i] * xc
            v[i] += 1.0
            for _ in range(2):  # second pass keeps orthogonality near machine precision
                v = v - xc * (xc @ v)
                if col:
                    v = v - basis[:, :col] @ (basis[:, :col].T @ v)
            basis[:, col] = v / np.linalg.norm(v)
            col += 1
        return basis
