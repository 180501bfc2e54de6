"""Perturbed Riemannian gradient descent, its tangent-space inner loop, and parameter balancing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .manifolds import Point, Tangent
from .numerics import RngStream
from .pullback import Pullback

MANIFOLD_STEP = "manifold_step"
PERTURBATION = "perturbation"
TANGENT_STEP = "tangent_step"
BOUNDARY_TRUNCATION = "boundary_truncation"
SMALL_GRAD_VISIT = "small_grad_visit"

EVENT_KINDS = (MANIFOLD_STEP, PERTURBATION, TANGENT_STEP, BOUNDARY_TRUNCATION, SMALL_GRAD_VISIT)

_CHI_FLOOR = 0.25 + 1e-9
_BUDGET_LIMIT = 2**63


@dataclass(frozen=True)
class PrgdParams:
    """The balanced parameter set driving one PRGD run.

    `horizon`, `radius`, `score_drop`, `locality` and `budget` are the inner
    step count, perturbation radius, required escape decrease, localization
    radius and total counter budget; `derive_params` computes them from the
    problem constants.
    """

    epsilon: float
    delta: float
    dim: int
    ell: float
    lip_grad: float
    lip_hess: float
    ball: float
    beta: float
    gap: float
    chi: float
    eta: float
    radius: float
    horizon: int
    score_drop: float
    locality: float
    budget: int
    mode: str

    def __post_init__(self):
        if self.mode not in ("theoretical", "practical"):
            raise ValueError(f"mode must be 'theoretical' or 'practical', got {self.mode!r}")
        positive = {
            "epsilon": self.epsilon,
            "ell": self.ell,
            "lip_grad": self.lip_grad,
            "lip_hess": self.lip_hess,
            "ball": self.ball,
            "gap": self.gap,
            "chi": self.chi,
            "eta": self.eta,
            "radius": self.radius,
            "score_drop": self.score_drop,
            "locality": self.locality,
        }
        for name, val in positive.items():
            if not val > 0:
                raise ValueError(f"{name} must be positive, got {val!r}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if not (isinstance(self.horizon, int) and self.horizon >= 1):
            raise ValueError("horizon must be an integer >= 1")
        if not (isinstance(self.budget, int) and self.budget >= 1):
            raise ValueError("budget must be an integer >= 1")
        if not self.chi > 0.25:
            raise ValueError(f"requires chi > 1/4, got {self.chi!r}")
        if abs(self.eta * self.ell - 1.0) > 1e-12:
            raise ValueError("requires eta == 1/ell")
        if not self.epsilon <= self.ball**2 * self.lip_hess:
            raise ValueError("requires epsilon <= ball^2 * lip_hess")
        if not self.lip_grad >= math.sqrt(self.lip_hess * self.epsilon):
            raise ValueError("requires lip_grad >= sqrt(lip_hess * epsilon)")
        if not self.lip_grad <= self.ell <= self.lip_grad + self.lip_hess * self.ball:
            raise ValueError("requires ell in [lip_grad, lip_grad + lip_hess * ball]")


def derive_params(
    epsilon: float,
    delta: float,
    dim: int,
    ell: float,
    lip_grad: float,
    lip_hess: float,
    ball: float,
    gap: float,
    mode: str = "theoretical",
    chi: float | None = None,
    beta: float = 0.0,
) -> PrgdParams:
    """Balance step size, radius, horizon, thresholds and budget from the constants.

    Theoretical mode derives chi from the high-probability bound; practical
    mode takes a user chi and keeps every other formula. Either way the
    horizon is rounded up to an integer and chi recomputed so that
    horizon = ell * chi / sqrt(lip_hess * epsilon) holds exactly.
    """
    if mode not in ("theoretical", "practical"):
        raise ValueError(f"mode must be 'theoretical' or 'practical', got {mode!r}")
    for name, val in (("epsilon", epsilon), ("ell", ell), ("lip_grad", lip_grad),
                      ("lip_hess", lip_hess), ("ball", ball), ("gap", gap)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val!r}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    if dim < 1:
        raise ValueError("dim must be at least 1")

    root = math.sqrt(lip_hess * epsilon)
    if mode == "theoretical":
        if not math.isfinite(ball):
            raise ValueError("theoretical mode requires a finite ball (the +inf sentinel is practical-mode only)")
        if not epsilon <= ball**2 * lip_hess:
            raise ValueError("requires epsilon <= ball^2 * lip_hess")
        if not lip_grad >= root:
            raise ValueError("requires lip_grad >= sqrt(lip_hess * epsilon)")
        if not epsilon**1.5 <= 3.0 * math.sqrt(lip_hess) * gap:
            raise ValueError("requires epsilon^(3/2) <= 3 * sqrt(lip_hess) * gap")
        chi0 = max(
            _CHI_FLOOR,
            4.0 * math.log2(2.0**31 * ell**2 * math.sqrt(dim) * gap / (delta * math.sqrt(lip_hess) * epsilon**2.5)),
        )
    else:
        if chi is None:
            raise ValueError("practical mode requires chi")
        if not chi > 0.25:
            raise ValueError(f"requires chi > 1/4, got {chi!r}")
        chi0 = float(chi)

    horizon = math.ceil(ell * chi0 / root)
    chi_adj = horizon * root / ell
    eta = 1.0 / ell
    radius = epsilon / (400.0 * chi_adj**3)
    score_drop = epsilon**1.5 / (50.0 * chi_adj**3 * math.sqrt(lip_hess))
    locality = math.sqrt(epsilon / lip_hess) / (4.0 * chi_adj)
    budget_raw = 8.0 * max(horizon / 3.0, gap * horizon / score_drop, gap / (eta * epsilon**2))
    if budget_raw > _BUDGET_LIMIT:
        raise OverflowError(
            f"counter budget {budget_raw:.3e} exceeds 2^63; the theoretical constants are intentionally conservative"
        )
    return PrgdParams(
        epsilon=epsilon,
        delta=delta,
        dim=dim,
        ell=ell,
        lip_grad=lip_grad,
        lip_hess=lip_hess,
        ball=ball,
        beta=beta,
        gap=gap,
        chi=chi_adj,
        eta=eta,
        radius=radius,
        horizon=horizon,
        score_drop=score_drop,
        locality=locality,
        budget=math.ceil(budget_raw),
        mode=mode,
    )


@dataclass(frozen=True)
class TraceEvent:
    """One algorithm event; `f` is the value after the event's step where applicable."""

    t: int
    kind: str
    f: float
    grad_norm: float | None = None
    tangent_norm: float | None = None
    alpha: float | None = None
    dist_start: float | None = None
    step: int | None = None
    f_before: float | None = None


@dataclass
class RunTrace:
    """Ordered record of everything a run did, plus the points needed to audit it."""

    f0: float
    grad_norm0: float = math.nan
    events: list[TraceEvent] = field(default_factory=list)
    iterates: list[np.ndarray] = field(default_factory=list)
    small_grad_points: list[tuple[int, Point]] = field(default_factory=list)
    final_point: Point | None = None
    final_f: float = math.nan
    final_grad_norm: float = math.nan
    final_t: int = 0
    gradient_queries: int = 0
    terminated: str = ""
    suspected_second_order: bool = False

    @property
    def n_manifold_steps(self) -> int:
        return sum(1 for ev in self.events if ev.kind == MANIFOLD_STEP)

    @property
    def n_perturbations(self) -> int:
        return sum(1 for ev in self.events if ev.kind == PERTURBATION)

    def csv_rows(self):
        """Rows matching the CSV schema t,kind,f,grad_norm,tangent_norm."""
        for ev in self.events:
            yield [
                str(ev.t),
                ev.kind,
                repr(float(ev.f)),
                "" if ev.grad_norm is None else repr(float(ev.grad_norm)),
                "" if ev.tangent_norm is None else repr(float(ev.tangent_norm)),
            ]


def _coords(v) -> np.ndarray:
    return v.coords if isinstance(v, Tangent) else np.asarray(v, dtype=float)


def boundary_alpha(s, g, eta: float, ball: float) -> float:
    """Step fraction alpha in (0, 1] with ||s - alpha*eta*g|| = ball.

    Solves the boundary quadratic with the numerically stable root; requires
    ||s|| < ball and ||s - eta*g|| >= ball.
    """
    s = _coords(s)
    g = _coords(g)
    if not (eta > 0):
        raise ValueError("eta must be positive")
    if not (ball > 0 and math.isfinite(ball)):
        raise ValueError("ball must be positive and finite")
    s_norm = float(np.linalg.norm(s))
    if s_norm >= ball:
        raise NumericalError(f"boundary step requires ||s|| < ball, got {s_norm!r} >= {ball!r}")
    if float(np.linalg.norm(s - eta * g)) < ball:
        raise NumericalError("boundary step requires the full step to leave the ball")
    g_sq = float(g @ g)
    p = float(s @ g)
    q = g_sq * (ball - s_norm) * (ball + s_norm)
    disc = math.sqrt(p * p + q)
    if p >= 0:
        alpha = (p + disc) / (eta * g_sq)
    else:
        alpha = q / (eta * g_sq * (disc - p))
    alpha = min(alpha, 1.0)
    if not (math.isfinite(alpha) and 0 < alpha <= 1):
        raise NumericalError(f"no feasible boundary step fraction in (0, 1], got {alpha!r}")
    return float(alpha)


def tangent_space_steps(
    pull: Pullback,
    s0: Tangent,
    eta: float,
    ball: float,
    horizon: int,
    anchor_t: int = 0,
    first_gradient: Tangent | None = None,
):
    """Run up to `horizon` gradient steps on the pullback inside the ball of radius `ball`.

    Iterates s_{j+1} = s_j - eta * grad; if an iterate would leave the ball the
    final step is truncated onto the boundary and the loop stops. Returns the
    final tangent vector and the per-step events. `first_gradient`, when
    given, is used as the gradient at s0 (the caller already computed it).
    """
    if not (eta > 0):
        raise ValueError("eta must be positive")
    if not ball > 0:
        raise ValueError("ball must be positive")
    if not (isinstance(horizon, int) and horizon >= 1):
        raise ValueError("horizon must be an integer >= 1")
    pull._check_arg(s0)
    if s0.norm > ball:
        raise ValueError(f"requires ||s0|| <= ball, got {s0.norm!r} > {ball!r}")

    manifold = pull.manifold
    base = pull.base
    s0c = s0.coords
    s = s0c
    events: list[TraceEvent] = []
    for j in range(horizon):
        if j == 0 and first_gradient is not None:
            grad = first_gradient.coords
        else:
            grad = pull.gradient(Tangent(base, s)).coords
        grad_norm = float(np.linalg.norm(grad))
        if not math.isfinite(grad_norm):
            raise NumericalError("pullback gradient is non-finite")
        candidate = s - eta * grad
        truncated = float(np.linalg.norm(candidate)) >= ball
        if truncated:
            alpha = boundary_alpha(s, grad, eta, ball)
            candidate = s - (alpha * eta) * grad
        else:
            alpha = 1.0
        s = manifold._project_array(base.coords, candidate)
        f_after = pull.value(Tangent(base, s))
        events.append(
            TraceEvent(
                t=anchor_t,
                kind=BOUNDARY_TRUNCATION if truncated else TANGENT_STEP,
                f=f_after,
                grad_norm=grad_norm,
                tangent_norm=float(np.linalg.norm(s)),
                alpha=alpha,
                dist_start=float(np.linalg.norm(s - s0c)),
                step=j + 1,
            )
        )
        if truncated:
            break
    return Tangent(base, s), events


def prgd(
    problem,
    x0: Point,
    params: PrgdParams,
    rng: RngStream,
    terminate_on_no_decrease: bool = False,
    stop_on_gap_exhausted: bool = True,
) -> RunTrace:
    """Perturbed Riemannian gradient descent from x0.

    While the gradient is large, take retracted gradient steps on the
    manifold; when it is small, perturb uniformly in the tangent ball of
    radius `params.radius` and run `params.horizon` pullback steps before
    retracting. The counter advances by 1 per manifold step and by the
    horizon per perturbation phase, and the run stops once it exceeds
    `params.budget`.

    With `terminate_on_no_decrease`, a perturbation phase that fails to
    decrease the pullback by score_drop/2 halts the run and flags the
    pre-perturbation point as a suspected second-order point. With
    `stop_on_gap_exhausted` (on by default), the run also halts once f has
    decreased by more than `params.gap` below f(x0), since the promised gap
    is then exhausted; disable it to match the textbook loop exactly.
    """
    problem._check_point(x0)
    manifold = problem.manifold
    x = x0
    f_x = problem.value(x)
    trace = RunTrace(f0=f_x)
    trace.iterates.append(x.coords)
    rng_state = rng
    t = 0
    queries = 0
    terminated = "budget"

    while t <= params.budget:
        if stop_on_gap_exhausted and f_x < trace.f0 - params.gap:
            terminated = "gap_exhausted"
            break
        grad = problem.riemannian_gradient(x)
        queries += 1
        grad_norm = float(np.linalg.norm(grad.coords))
        if not math.isfinite(grad_norm):
            raise NumericalError("Riemannian gradient is non-finite")
        if queries == 1:
            trace.grad_norm0 = grad_norm
        pull = Pullback(problem, x)
        if grad_norm > params.epsilon:
            # the single inner step reuses the loop-top gradient, costing no extra query
            s_fin, evs = tangent_space_steps(
                pull, manifold.zero_tangent(x), params.eta, params.ball, 1,
                anchor_t=t, first_gradient=grad,
            )
            ev = evs[0]
            trace.events.append(
                TraceEvent(
                    t=t,
                    kind=MANIFOLD_STEP,
                    f=ev.f,
                    grad_norm=grad_norm,
                    tangent_norm=ev.tangent_norm,
                    alpha=ev.alpha,
                    f_before=f_x,
                )
            )
            x = manifold.retract(x, s_fin)
            f_x = ev.f
            t += 1
            trace.iterates.append(x.coords)
        else:
            trace.events.append(TraceEvent(t=t, kind=SMALL_GRAD_VISIT, f=f_x, grad_norm=grad_norm))
            trace.small_grad_points.append((t, x))
            xi, rng_state = manifold.sample_ball(x, params.radius, rng_state)
            s0 = Tangent(x, params.eta * xi.coords)
            trace.events.append(
                TraceEvent(
                    t=t,
                    kind=PERTURBATION,
                    f=pull.value(s0),
                    grad_norm=grad_norm,
                    tangent_norm=s0.norm,
                )
            )
            s_fin, evs = tangent_space_steps(
                pull, s0, params.eta, params.ball, params.horizon, anchor_t=t
            )
            queries += len(evs)
            trace.events.extend(evs)
            f_end = evs[-1].f
            if terminate_on_no_decrease and f_end - f_x > -params.score_drop / 2.0:
                # the phase ran (and spent its queries), so the counter still advances
                t += params.horizon
                terminated = "decrease_threshold"
                trace.suspected_second_order = True
                break
            x = manifold.retract(x, s_fin)
            f_x = f_end
            t += params.horizon
            trace.iterates.append(x.coords)

    trace.final_point = x
    trace.final_f = f_x
    trace.final_t = t
    grad_fin = problem.riemannian_gradient(x)
    queries += 1
    trace.final_grad_norm = float(np.linalg.norm(grad_fin.coords))
    trace.gradient_queries = queries
    trace.terminated = terminated
    return trace


def rgd(problem, x0: Point, eta: float, epsilon: float, max_iters: int) -> RunTrace:
    """Plain Riemannian gradient descent until ||grad f|| <= epsilon or the budget runs out."""
    if not (eta > 0):
        raise ValueError("eta must be positive")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if max_iters < 0:
        raise ValueError("max_iters must be nonnegative")
    problem._check_point(x0)
    manifold = problem.manifold
    x = x0
    f_x = problem.value(x)
    trace = RunTrace(f0=f_x)
    trace.iterates.append(x.coords)
    queries = 0
    t = 0
    terminated = "budget"
    grad_norm = math.nan

    while True:
        grad = problem.riemannian_gradient(x)
        queries += 1
        grad_norm = float(np.linalg.norm(grad.coords))
        if not math.isfinite(grad_norm):
            raise NumericalError("Riemannian gradient is non-finite")
        if queries == 1:
            trace.grad_norm0 = grad_norm
        if grad_norm <= epsilon:
            terminated = "gradient_converged"
            break
        if t >= max_iters:
            break
        step = Tangent(x, -eta * grad.coords)
        x = manifold.retract(x, step)
        f_new = problem.value(x)
        trace.events.append(
            TraceEvent(
                t=t,
                kind=MANIFOLD_STEP,
                f=f_new,
                grad_norm=grad_norm,
                tangent_norm=step.norm,
                alpha=1.0,
                f_before=f_x,
            )
        )
        f_x = f_new
        t += 1
        trace.iterates.append(x.coords)

    trace.final_point = x
    trace.final_f = f_x
    trace.final_grad_norm = grad_norm
    trace.final_t = t
    trace.gradient_queries = queries
    trace.terminated = terminated
    return trace
