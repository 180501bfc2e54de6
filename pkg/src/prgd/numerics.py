"""Dense symmetric linear algebra, finite-difference oracles, and deterministic RNG streams."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

EIG_DIM_LIMIT = 2000
SYM_RTOL = 1e-12
DEFAULT_GRAD_H = 1e-5
DEFAULT_HESS_H = 1e-4


def as_vector(entries) -> np.ndarray:
    """Validate entries as a finite 1-d float64 vector of length >= 1."""
    v = np.asarray(entries, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"expected a 1-d vector with at least one entry, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must all be finite")
    return v


def as_sym_matrix(entries, rtol: float = SYM_RTOL) -> np.ndarray:
    """Validate entries as a finite square matrix, symmetric to relative tolerance rtol."""
    m = np.asarray(entries, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must all be finite")
    scale = max(float(np.abs(m).max()), 1.0)
    asym = float(np.abs(m - m.T).max())
    if asym > rtol * scale:
        raise ValueError(f"matrix is not symmetric: max asymmetry {asym:.3e} exceeds {rtol:.1e} * scale")
    return m


def min_eigpair(m) -> tuple[float, np.ndarray]:
    """Algebraically smallest eigenvalue and a unit eigenvector of a symmetric matrix.

    The residual ||m v - lam v|| is checked against 1e-9 * ||m||; exceeding it
    raises NumericalError.
    """
    m = as_sym_matrix(m)
    n = m.shape[0]
    if n > EIG_DIM_LIMIT:
        raise ValueError(f"matrix dimension {n} exceeds the supported limit {EIG_DIM_LIMIT}")
    try:
        vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK essentially never fails here
        raise NumericalError(f"symmetric eigendecomposition did not converge: {exc}") from exc
    lam = float(vals[0])
    vec = np.ascontiguousarray(vecs[:, 0])
    norm_m = float(np.abs(vals).max())
    residual = float(np.linalg.norm(m @ vec - lam * vec))
    if residual > 1e-9 * norm_m:
        raise NumericalError(
            f"eigenpair residual {residual:.3e} exceeds 1e-9 * |m| = {1e-9 * norm_m:.3e}"
        )
    return lam, vec


def operator_norm(m) -> float:
    """Spectral norm max|eigenvalue| of a symmetric matrix."""
    m = as_sym_matrix(m)
    if m.shape[0] > EIG_DIM_LIMIT:
        raise ValueError(f"matrix dimension {m.shape[0]} exceeds the supported limit {EIG_DIM_LIMIT}")
    try:
        vals = np.linalg.eigvalsh(0.5 * (m + m.T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError(f"symmetric eigendecomposition did not converge: {exc}") from exc
    return float(np.abs(vals).max())


def _eval_scalar(fn, point: np.ndarray) -> float:
    val = float(fn(point))
    if not math.isfinite(val):
        raise NumericalError(f"scalar function returned non-finite value {val!r}")
    return val


def fd_gradient(fn, s, h: float = DEFAULT_GRAD_H) -> np.ndarray:
    """Central-difference gradient of a scalar function at s."""
    s = as_vector(s)
    if not (h > 0):
        raise ValueError("finite-difference step h must be positive")
    grad = np.empty_like(s)
    for i in range(s.size):
        offset = np.zeros_like(s)
        offset[i] = h
        grad[i] = (_eval_scalar(fn, s + offset) - _eval_scalar(fn, s - offset)) / (2.0 * h)
    return grad


def fd_hessian(fn, s, h: float = DEFAULT_HESS_H) -> np.ndarray:
    """Central-difference Hessian of a scalar function at s, symmetrized as (M + M^T)/2."""
    s = as_vector(s)
    if not (h > 0):
        raise ValueError("finite-difference step h must be positive")
    n = s.size
    f0 = _eval_scalar(fn, s)
    hess = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        hess[i, i] = (_eval_scalar(fn, s + ei) - 2.0 * f0 + _eval_scalar(fn, s - ei)) / (h * h)
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            val = (
                _eval_scalar(fn, s + ei + ej)
                - _eval_scalar(fn, s + ei - ej)
                - _eval_scalar(fn, s - ei + ej)
                + _eval_scalar(fn, s - ei - ej)
            ) / (4.0 * h * h)
            hess[i, j] = val
            hess[j, i] = val
    return 0.5 * (hess + hess.T)


@dataclass(frozen=True)
class RngStream:
    """Splittable counter-based random stream (Philox), advanced by value.

    Identical (seed, stream, index) produce identical draws on every run and
    platform, given identical draw order. Draw methods return the values plus
    the advanced stream, so a stream value is never mutated in place.
    """

    seed: int
    stream: int = 0
    index: int = 0

    def __post_init__(self):
        for name in ("seed", "stream", "index"):
            raw = getattr(self, name)
            if not isinstance(raw, (int, np.integer)):
                raise ValueError(f"{name} must be an integer, got {type(raw).__name__}")
            val = int(raw)
            if not 0 <= val < 2**64:
                raise ValueError(f"{name} must lie in [0, 2^64), got {val}")
            object.__setattr__(self, name, val)

    def _generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        # each draw owns a disjoint 2^192-block of the Philox counter space
        counter = np.array([0, 0, 0, self.index], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(counter=counter, key=key))

    def _next(self) -> "RngStream":
        return RngStream(self.seed, self.stream, self.index + 1)

    def with_stream(self, stream: int) -> "RngStream":
        """A fresh sub-stream of the same seed; draws are independent of this one's."""
        return RngStream(self.seed, stream, 0)

    def standard_normal(self, shape=None):
        """Draw standard normals; returns (values, advanced stream)."""
        gen = self._generator()
        out = gen.standard_normal() if shape is None else gen.standard_normal(shape)
        return out, self._next()

    def uniform(self, shape=None):
        """Draw uniforms on [0, 1); returns (values, advanced stream)."""
        gen = self._generator()
        out = gen.random() if shape is None else gen.random(shape)
        return out, self._next()


def sample_unit_ball(dim: int, rng: RngStream) -> tuple[np.ndarray, RngStream]:
    """Uniform draw from the closed unit ball of R^dim.

    Gaussian direction, radius U^(1/dim); one draw event on the stream.
    """
    if dim < 1:
        raise ValueError("dim must be at least 1")
    gen = rng._generator()
    direction = gen.standard_normal(dim)
    u = gen.random()
    nrm = float(np.linalg.norm(direction))
    if not (nrm > 0 and math.isfinite(nrm)):  # pragma: no cover - probability-zero draw
        raise NumericalError("degenerate Gaussian direction while sampling the unit ball")
    point = direction * (u ** (1.0 / dim) / nrm)
    out_norm = float(np.linalg.norm(point))
    if out_norm > 1.0:  # pragma: no cover - round-off guard
        point = point / out_norm
    return point, rng._next()
