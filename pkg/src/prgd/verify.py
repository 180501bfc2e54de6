"""Executable checks: criticality reports, empirical Lipschitz bounds, trace audits, coupled escapes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .descent import (
    BOUNDARY_TRUNCATION,
    MANIFOLD_STEP,
    PERTURBATION,
    TANGENT_STEP,
    PrgdParams,
    RunTrace,
    tangent_space_steps,
)
from .manifolds import Point, Sphere, Tangent
from .numerics import DEFAULT_HESS_H, RngStream, min_eigpair, operator_norm
from .pullback import Pullback

AUDIT_SLACK = 1e-9
DECREASE_SLACK = 1e-12


@dataclass(frozen=True)
class CriticalityReport:
    """Second-order criticality check at one point.

    `min_eig_pullback` is lambda_min of the pullback Hessian at the origin;
    `min_eig_hess` is an independent estimate for the Riemannian Hessian
    (equal up to discretization error when the retraction is second order).
    """

    grad_norm: float
    min_eig_pullback: float
    min_eig_hess: float
    eps: float
    rho: float
    verdict: bool
    eigvec: Tangent

    def as_dict(self) -> dict:
        return {
            "grad_norm": self.grad_norm,
            "min_eig_pullback": self.min_eig_pullback,
            "min_eig_hess": self.min_eig_hess,
            "eps": self.eps,
            "rho": self.rho,
            "verdict": self.verdict,
        }


def riemannian_hessian_matrix(problem, x: Point, h: float = DEFAULT_HESS_H) -> np.ndarray:
    """Riemannian Hessian in an orthonormal tangent basis, by differencing the gradient field.

    Hess f(x)[u] is the tangent projection of the derivative of the gradient
    field along the retraction curve through u; central differences give it to
    O(h^2).
    """
    manifold = problem.manifold
    basis = manifold.tangent_basis(x)
    k = manifold.intrinsic_dim
    columns = np.empty((k, k))
    for j in range(k):
        step = h * basis[:, j]
        yp = manifold.retract(x, Tangent(x, step))
        ym = manifold.retract(x, Tangent(x, -step))
        gp = problem.riemannian_gradient(yp).coords
        gm = problem.riemannian_gradient(ym).coords
        deriv = manifold._project_array(x.coords, (gp - gm) / (2.0 * h))
        columns[:, j] = basis.T @ deriv
    return 0.5 * (columns + columns.T)


def check_second_order_point(problem, x: Point, eps: float, rho: float,
                             fd_h: float = DEFAULT_HESS_H) -> CriticalityReport:
    """Evaluate the eps-second-order conditions at x: small gradient, bounded negative curvature."""
    if not (eps > 0 and rho > 0):
        raise ValueError("eps and rho must be positive")
    if not (fd_h > 0):
        raise ValueError("fd_h must be positive")
    problem._check_point(x)
    grad_norm = float(np.linalg.norm(problem.riemannian_gradient(x).coords))
    pull = Pullback(problem, x)
    lam, vec = min_eigpair(pull.hessian_at_zero(fd_h))
    lam_hess, _ = min_eigpair(riemannian_hessian_matrix(problem, x, fd_h))
    ambient = problem.manifold._project_array(x.coords, pull.basis @ vec)
    return CriticalityReport(
        grad_norm=grad_norm,
        min_eig_pullback=lam,
        min_eig_hess=lam_hess,
        eps=eps,
        rho=rho,
        verdict=bool(grad_norm <= eps and lam >= -math.sqrt(rho * eps)),
        eigvec=Tangent(x, ambient),
    )


def random_point(manifold, rng: RngStream) -> tuple[Point, RngStream]:
    """Uniform point on the sphere (normalized Gaussian) or standard Gaussian in R^d."""
    gauss, rng = rng.standard_normal(manifold.ambient_dim)
    if isinstance(manifold, Sphere):
        return manifold.point(gauss / np.linalg.norm(gauss)), rng
    return manifold.point(gauss), rng


def _sample_pair(problem, ball, rng, min_norm=1e-8):
    x, rng = random_point(problem.manifold, rng)
    while True:
        s, rng = problem.manifold.sample_ball(x, ball, rng)
        if s.norm >= min_norm:
            return x, s, rng


def empirical_grad_lipschitz(problem, ball: float, n_samples: int, rng: RngStream) -> float:
    """Max of ||grad-pullback(s) - grad-pullback(0)|| / ||s|| over random base points and s."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    worst = 0.0
    for _ in range(n_samples):
        x, s, rng = _sample_pair(problem, ball, rng)
        pull = Pullback(problem, x)
        g_s = pull.gradient(s).coords
        g_0 = problem.riemannian_gradient(x).coords
        worst = max(worst, float(np.linalg.norm(g_s - g_0)) / s.norm)
    return worst


def empirical_hess_lipschitz(problem, ball: float, n_samples: int, rng: RngStream,
                             fd_h: float = DEFAULT_HESS_H) -> float:
    """Max operator-norm ratio ||hess-pullback(s) - hess-pullback(0)|| / ||s||, intrinsic basis."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    worst = 0.0
    for _ in range(n_samples):
        x, s, rng = _sample_pair(problem, ball, rng)
        pull = Pullback(problem, x)
        diff = pull.hessian_at(s, fd_h) - pull.hessian_at_zero(fd_h)
        worst = max(worst, operator_norm(diff) / s.norm)
    return worst


@dataclass
class TraceAuditReport:
    """Outcome of auditing a trace against the decrease and localization inequalities."""

    violations: list[str] = field(default_factory=list)
    n_manifold_steps: int = 0
    n_phases: int = 0
    n_tangent_steps: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first_violation(self) -> str | None:
        return self.violations[0] if self.violations else None


def audit_trace(trace: RunTrace, params: PrgdParams) -> TraceAuditReport:
    """Audit every step of a trace: sufficient decrease, large-gradient progress, localization.

    Checks, with round-off slack only: each step decreases the (pullback)
    value by at least (alpha*eta/2)*||grad||^2; each manifold step with
    ||grad|| > epsilon decreases f by at least eta*epsilon^2/2; and along
    each tangent phase, ||s_j - s_0|| <= sqrt(2*eta*j*(f(s_0) - f(s_j))).
    """
    report = TraceAuditReport()
    eta = params.eta
    phase_f0 = None
    f_prev = None
    for ev in trace.events:
        if ev.kind == MANIFOLD_STEP:
            report.n_manifold_steps += 1
            if ev.f_before is None or ev.alpha is None or ev.grad_norm is None:
                report.violations.append(f"t={ev.t}: manifold step lacks audit fields")
                continue
            bound = -(ev.alpha * eta / 2.0) * ev.grad_norm**2
            if ev.f - ev.f_before > bound + DECREASE_SLACK:
                report.violations.append(
                    f"t={ev.t}: step decrease {ev.f - ev.f_before:.6e} above sufficient-decrease bound {bound:.6e}"
                )
            if ev.grad_norm > params.epsilon:
                drop = ev.f_before - ev.f
                need = eta * params.epsilon**2 / 2.0
                if drop < need - AUDIT_SLACK:
                    report.violations.append(
                        f"t={ev.t}: large-gradient step dropped f by {drop:.6e} < {need:.6e}"
                    )
        elif ev.kind == PERTURBATION:
            report.n_phases += 1
            phase_f0 = ev.f
            f_prev = ev.f
        elif ev.kind in (TANGENT_STEP, BOUNDARY_TRUNCATION):
            report.n_tangent_steps += 1
            if phase_f0 is None or f_prev is None or ev.alpha is None or ev.grad_norm is None:
                report.violations.append(f"t={ev.t}: tangent step outside a phase or lacking fields")
                continue
            bound = -(ev.alpha * eta / 2.0) * ev.grad_norm**2
            if ev.f - f_prev > bound + DECREASE_SLACK:
                report.violations.append(
                    f"t={ev.t} j={ev.step}: tangent decrease {ev.f - f_prev:.6e} above bound {bound:.6e}"
                )
            if ev.dist_start is not None and ev.step is not None:
                # recorded f values carry ~ulp(|f|) error; a drop below that
                # resolution must not collapse the localization bound
                drop = phase_f0 - ev.f + 4.0 * np.finfo(float).eps * max(abs(phase_f0), abs(ev.f))
                budget = math.sqrt(max(2.0 * eta * ev.step * drop, 0.0))
                if ev.dist_start > budget + AUDIT_SLACK:
                    report.violations.append(
                        f"t={ev.t} j={ev.step}: moved {ev.dist_start:.6e} beyond localization bound {budget:.6e}"
                    )
            f_prev = ev.f
    return report


def coupling_experiment(problem, x: Point, params: PrgdParams, r0: float,
                        fd_h: float = DEFAULT_HESS_H) -> tuple[float, float]:
    """Deterministic two-start escape test along the most negative curvature direction.

    Starts the tangent loop at +/-(eta*r0/2) times the bottom eigenvector of
    the pullback Hessian and returns both value decreases after the full
    horizon; when the hypotheses hold, the smaller decrease is at most
    -score_drop.
    """
    problem._check_point(x)
    if not (r0 > 0):
        raise ValueError("r0 must be positive")
    pull = Pullback(problem, x)
    lam, vec = min_eigpair(pull.hessian_at_zero(fd_h))
    bar = -math.sqrt(params.lip_hess * params.epsilon)
    if lam > bar:
        raise ValueError(
            f"hypothesis failed: lambda_min of the pullback Hessian is {lam:.6e} > -sqrt(rho*eps) = {bar:.6e}"
        )
    omega = 2.0 ** (2.0 - params.chi) * params.ell * params.locality
    if not r0 > omega:
        raise ValueError(f"hypothesis failed: r0 = {r0:.6e} must exceed omega = {omega:.6e}")
    half = params.eta * r0 / 2.0
    if half > params.ball:
        raise ValueError("hypothesis failed: the starts do not fit in the tangent ball of radius b")
    reach = math.sqrt(2.0 * params.eta * params.horizon * params.score_drop) + half
    if reach > params.locality:
        raise ValueError(
            f"hypothesis failed: localization budget {reach:.6e} exceeds the locality radius {params.locality:.6e}"
        )
    direction = problem.manifold._project_array(x.coords, pull.basis @ vec)
    s_plus = Tangent(x, half * direction)
    s_minus = Tangent(x, -half * direction)
    drops = []
    for s0 in (s_plus, s_minus):
        f_start = pull.value(s0)
        s_end, _ = tangent_space_steps(pull, s0, params.eta, params.ball, params.horizon)
        drops.append(pull.value(s_end) - f_start)
    return drops[0], drops[1]
