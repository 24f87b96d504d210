"""
Problem description for multi-agent optimization with a coupled cost and
coupled inequality constraints::

    minimize    F(f_1(x_1) + ... + f_N(x_N))
    subject to  g_1(x_1) + ... + g_N(x_N) <= 0,   x_i in X_i.

Agent ``i`` only ever evaluates its own ``f_i``, ``g_i`` and projection onto
``X_i``; the global cost ``F`` is known to every agent.
"""

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from . import _numdiff
from .errors import DimensionMismatch, GradientMismatch, NonPositiveGamma, SlaterViolation

# FD agreement above this raises; between FD_REPORT_TOL and this it is only reported
FD_RAISE_TOL = 1e-4
FD_REPORT_TOL = 1e-5


class PerturbationMode(str, enum.Enum):
    GRADIENT = "gradient"
    PROXIMAL = "proximal"


@dataclass(frozen=True)
class Dimensions:
    num_agents: int
    primal_dim: int
    map_dim: int
    constraint_dim: int

    def __post_init__(self):
        for name in ("num_agents", "primal_dim", "map_dim", "constraint_dim"):
            value = getattr(self, name)
            if int(value) != value or value <= 0:
                raise DimensionMismatch(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class GlobalCost:
    """The cost ``F: R^M -> R`` with its gradient and declared constants."""

    eval: Callable
    grad: Callable
    lipschitz_grad: float
    grad_bound: float
    doc: Optional[dict] = field(default=None, compare=False, repr=False)

    def __call__(self, u):
        return float(self.eval(u))


@dataclass(frozen=True)
class AgentFunctions:
    """
    Everything one agent knows about the problem.

    Exactly one of ``constraint_jacobian`` (smooth constraints, gradient
    perturbation) and ``constraint_prox`` (non-smooth constraints, proximal
    perturbation) must be given. In proximal mode ``constraint_subgradient``
    supplies the deterministic subgradient used in the primal update.

    ``constraint_prox(v, weights, rho)`` must return the minimizer over
    ``X_i`` of ``weights @ g_i(a) + ||a - v||^2 / (2 rho)``.
    """

    map: Callable
    map_jacobian: Callable
    constraint: Callable
    project: Callable
    constraint_jacobian: Optional[Callable] = None
    constraint_prox: Optional[Callable] = None
    constraint_subgradient: Optional[Callable] = None
    diameter_bound: float = math.inf
    lipschitz_map: float = 0.0
    lipschitz_constraint: float = 0.0
    lipschitz_constraint_grad: float = 0.0
    doc: Optional[dict] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        smooth = self.constraint_jacobian is not None
        prox = self.constraint_prox is not None
        if smooth == prox:
            raise ValueError("give exactly one of constraint_jacobian and constraint_prox")
        if prox and self.constraint_subgradient is None:
            raise ValueError("proximal agents need a constraint_subgradient callback")

    @property
    def mode(self):
        if self.constraint_jacobian is not None:
            return PerturbationMode.GRADIENT
        return PerturbationMode.PROXIMAL

    def constraint_slope(self, x):
        """Jacobian of ``g_i`` (smooth) or the chosen subgradient rows (non-smooth)."""
        if self.constraint_jacobian is not None:
            return self.constraint_jacobian(x)
        return self.constraint_subgradient(x)


@dataclass(frozen=True)
class SlaterCertificate:
    """
    A strictly feasible point together with the data bounding the optimal dual.

    ``gamma`` is ``min_p -sum_i g_ip(point_i)``; use :func:`slater_certificate`
    to compute it from the agents.
    """

    point: tuple
    gamma: float
    dual_lower_bound: float = 0.0
    slack_margin: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(np.asarray(p, dtype=float) for p in self.point))
        if self.slack_margin <= 0:
            raise ValueError("slack_margin must be positive")


def slater_certificate(agents, point, dual_lower_bound=0.0, slack_margin=1.0):
    """Build a :class:`SlaterCertificate`, computing gamma from the agents' constraints."""
    total = sum(np.asarray(a.constraint(np.asarray(p, dtype=float))) for a, p in zip(agents, point))
    gamma = float(np.min(-np.atleast_1d(total)))
    return SlaterCertificate(tuple(point), gamma, float(dual_lower_bound), float(slack_margin))


@dataclass(frozen=True)
class ProblemSpec:
    dims: Dimensions
    cost: GlobalCost
    agents: tuple
    slater: SlaterCertificate
    global_grad_lipschitz: float
    name: str = "problem"
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if len(self.agents) != self.dims.num_agents:
            raise DimensionMismatch(
                f"expected {self.dims.num_agents} agents, got {len(self.agents)}")
        if len(self.slater.point) != self.dims.num_agents:
            raise DimensionMismatch("Slater point must have one block per agent")

    @property
    def num_agents(self):
        return self.dims.num_agents

    @cached_property
    def mode(self):
        modes = {a.mode for a in self.agents}
        if len(modes) != 1:
            raise ValueError("all agents must share one perturbation mode")
        return modes.pop()

    def stack(self, x):
        """Return ``x`` as an ``(N, K)`` array (accepts flat ``R^{NK}`` input)."""
        x = np.asarray(x, dtype=float)
        shape = (self.dims.num_agents, self.dims.primal_dim)
        if x.shape == shape:
            return x
        if x.size != shape[0] * shape[1]:
            raise DimensionMismatch(f"primal point has {x.size} entries, expected {shape[0] * shape[1]}")
        return x.reshape(shape)

    def map_sum(self, x):
        x = self.stack(x)
        total = np.zeros(self.dims.map_dim)
        for agent, xi in zip(self.agents, x):
            total = total + agent.map(xi)
        return total

    def constraint_sum(self, x):
        x = self.stack(x)
        total = np.zeros(self.dims.constraint_dim)
        for agent, xi in zip(self.agents, x):
            total = total + agent.constraint(xi)
        return total

    def objective(self, x):
        return self.cost(self.map_sum(x))

    def lagrangian(self, x, lam):
        return self.objective(x) + float(np.dot(lam, self.constraint_sum(x)))

    def objective_gradient(self, x):
        """Stacked gradient of the network cost, block ``i`` = ``J_fi(x_i)^T grad F(sum f)``."""
        x = self.stack(x)
        gF = self.cost.grad(self.map_sum(x))
        return np.array([a.map_jacobian(xi).T @ gF for a, xi in zip(self.agents, x)])

    def lagrangian_gradient(self, x, lam):
        x = self.stack(x)
        grad = self.objective_gradient(x)
        for i, (a, xi) in enumerate(zip(self.agents, x)):
            grad[i] += a.constraint_slope(xi).T @ lam
        return grad

    def project(self, x):
        x = self.stack(x)
        return np.array([a.project(xi) for a, xi in zip(self.agents, x)])

    @cached_property
    def gamma(self):
        total = self.constraint_sum(np.array(self.slater.point))
        return float(np.min(-total))

    @cached_property
    def d_lambda(self):
        return dual_ball_radius(self.slater, self.objective(np.array(self.slater.point)))

    def theorem_rho1_bound(self, d_lambda=None):
        """Largest rho1 covered by the convergence theorems for this problem's mode."""
        if self.mode is PerturbationMode.PROXIMAL:
            denom = self.global_grad_lipschitz
        else:
            d = self.d_lambda if d_lambda is None else d_lambda
            g_g = max(a.lipschitz_constraint_grad for a in self.agents)
            denom = self.global_grad_lipschitz + d * math.sqrt(self.dims.constraint_dim) * g_g
        return math.inf if denom <= 0 else 1.0 / denom


def eval_lagrangian(spec, x, lam):
    """``F(sum f_i(x_i)) + lam @ sum g_i(x_i)`` for stacked ``x`` (no projection applied)."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (spec.dims.constraint_dim,):
        raise DimensionMismatch(f"lambda must have shape ({spec.dims.constraint_dim},)")
    return spec.lagrangian(x, lam)


def dual_ball_radius(slater, objective_at_slater):
    """Radius ``(F(x_bar) - q_tilde) / gamma + delta`` of the ball holding the optimal duals."""
    if not slater.gamma > 0:
        raise NonPositiveGamma(f"gamma must be positive, got {slater.gamma}")
    gap = objective_at_slater - slater.dual_lower_bound
    if gap < 0:
        raise ValueError("dual_lower_bound exceeds the objective at the Slater point")
    return gap / slater.gamma + slater.slack_margin


def project_dual_ball(v, radius):
    """Projection onto ``{lam >= 0, ||lam|| <= radius}``: clip, then scale radially."""
    lam = np.maximum(v, 0.0)
    nrm = math.sqrt(float(np.dot(lam, lam)))
    if nrm > radius:
        lam = lam * (radius / nrm)
    return lam


# --------------------------------------------------------------------------
# validation

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    measured: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def add(self, name, passed, detail=""):
        self.checks.append(Check(name, bool(passed), detail))

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {
            "ok": self.ok,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
            "measured": self.measured,
        }

    def __str__(self):
        lines = [f"[{'PASS' if c.passed else 'FAIL'}] {c.name}" + (f": {c.detail}" if c.detail else "")
                 for c in self.checks]
        return "\n".join(lines)


def _sample_in_set(agent, dim, rng):
    lo, hi = _bounding_box(agent, dim)
    lo_f = np.where(np.isfinite(lo), lo, -1.0)
    hi_f = np.where(np.isfinite(hi), hi, lo_f + 2.0)
    lo_f = np.where(np.isfinite(lo), lo_f, hi_f - 2.0)
    v = lo_f + (hi_f - lo_f) * rng.random(dim)
    return agent.project(v)


def _bounding_box(agent, dim):
    proj = agent.project
    owner = getattr(proj, "__self__", proj)
    if hasattr(owner, "bounding_box"):
        return owner.bounding_box()
    r = agent.diameter_bound if math.isfinite(agent.diameter_bound) else 1.0
    return np.full(dim, -r), np.full(dim, r)


def _check_shape(value, shape, what):
    value = np.asarray(value)
    if value.shape != shape:
        raise DimensionMismatch(f"{what} returned shape {value.shape}, expected {shape}")


def validate_problem(spec, rng_seed=0, num_samples=20):
    """
    Spot-check a problem against the structural and smoothness assumptions.

    Raises
    ------
    DimensionMismatch
        A callback returned an array of the wrong size.
    SlaterViolation
        The Slater point is not strictly feasible.
    GradientMismatch
        A declared derivative disagrees with central differences by more
        than 1e-4 (relative).

    Returns
    -------
    ValidationReport
        Per-check pass/fail plus the empirical constants in ``measured``.
    """
    rng = np.random.default_rng(rng_seed)
    d = spec.dims
    N, K, M, P = d.num_agents, d.primal_dim, d.map_dim, d.constraint_dim
    report = ValidationReport()
    eps = 1e-9

    # shapes
    samples = []
    for i, agent in enumerate(spec.agents):
        pts = [_sample_in_set(agent, K, rng) for _ in range(num_samples)]
        samples.append(pts)
        x = pts[0]
        _check_shape(x, (K,), f"agent {i} project")
        _check_shape(agent.map(x), (M,), f"agent {i} map")
        _check_shape(agent.map_jacobian(x), (M, K), f"agent {i} map_jacobian")
        _check_shape(agent.constraint(x), (P,), f"agent {i} constraint")
        _check_shape(agent.constraint_slope(x), (P, K), f"agent {i} constraint slope")
        if agent.constraint_prox is not None:
            _check_shape(agent.constraint_prox(x, np.ones(P), 1.0), (K,), f"agent {i} constraint_prox")
    u0 = spec.map_sum(np.array([s[0] for s in samples]))
    _check_shape(spec.cost.grad(u0), (M,), "cost grad")
    if not np.isscalar(spec.cost.eval(u0)) and np.asarray(spec.cost.eval(u0)).shape != ():
        raise DimensionMismatch("cost must return a scalar")
    report.add("dimensions", True, f"N={N} K={K} M={M} P={P}")

    # finite differences
    worst = 0.0
    for s in range(num_samples):
        xs = np.array([samples[i][s] for i in range(N)])
        u = spec.map_sum(xs)
        worst = max(worst, _numdiff.relative_error(_numdiff.central_jacobian(spec.cost.eval, u),
                                                   spec.cost.grad(u)))
        for agent, xi in zip(spec.agents, xs):
            worst = max(worst, _numdiff.relative_error(_numdiff.central_jacobian(agent.map, xi),
                                                       agent.map_jacobian(xi)))
            if agent.constraint_jacobian is not None:
                worst = max(worst, _numdiff.relative_error(
                    _numdiff.central_jacobian(agent.constraint, xi), agent.constraint_jacobian(xi)))
    report.measured["fd_max_rel_error"] = worst
    if worst > FD_RAISE_TOL:
        raise GradientMismatch(f"derivative disagrees with finite differences (rel. error {worst:.3g})")
    report.add("finite-difference gradients", worst < FD_REPORT_TOL, f"max rel. error {worst:.2e}")

    # projections
    idem, nonexp, bounded = 0.0, 0.0, True
    for i, agent in enumerate(spec.agents):
        scale = agent.diameter_bound if math.isfinite(agent.diameter_bound) else 1.0
        for _ in range(num_samples):
            u = rng.normal(size=K) * 2 * scale
            v = rng.normal(size=K) * 2 * scale
            pu, pv = agent.project(u), agent.project(v)
            idem = max(idem, float(np.linalg.norm(agent.project(pu) - pu)))
            nonexp = max(nonexp, float(np.linalg.norm(pu - pv) - np.linalg.norm(u - v)))
            if np.linalg.norm(pu) > agent.diameter_bound + 1e-12:
                bounded = False
    report.measured["projection_idempotence"] = idem
    report.add("projection idempotent", idem <= 1e-9, f"max drift {idem:.1e}")
    report.add("projection non-expansive", nonexp <= 1e-12, f"max excess {nonexp:.1e}")
    report.add("projection within diameter bound", bounded)

    # Slater certificate
    xbar = np.array(spec.slater.point)
    if xbar.shape != (N, K):
        raise DimensionMismatch(f"Slater point has shape {xbar.shape}, expected {(N, K)}")
    gsum = spec.constraint_sum(xbar)
    if np.any(gsum >= 0):
        raise SlaterViolation(f"sum of constraints at Slater point is not strictly negative: {gsum}")
    gamma = float(np.min(-gsum))
    in_set = all(np.linalg.norm(a.project(x) - x) <= 1e-9 for a, x in zip(spec.agents, xbar))
    report.add("Slater point in X", in_set)
    report.add("gamma positive", gamma > 0, f"gamma={gamma:.6g}")
    report.add("gamma matches certificate", abs(gamma - spec.slater.gamma) <= 1e-9 * max(1.0, gamma),
               f"declared {spec.slater.gamma:.6g}")
    report.measured["gamma"] = gamma
    d_lam = spec.d_lambda
    report.measured["d_lambda"] = d_lam
    report.add("dual ball radius finite", math.isfinite(d_lam) and d_lam > 0, f"D_lambda={d_lam:.6g}")

    # empirical Lipschitz constants
    L_f = L_g = G_g = 0.0
    for i, agent in enumerate(spec.agents):
        pts = samples[i]
        for a, b in zip(pts, pts[1:] + pts[:1]):
            L_f = max(L_f, float(np.max(np.linalg.norm(agent.map_jacobian(a), axis=1))))
            diff = np.linalg.norm(a - b)
            if diff > 1e-12:
                L_g = max(L_g, float(np.max(np.abs(agent.constraint(a) - agent.constraint(b)))) / diff)
            if agent.constraint_jacobian is not None:
                L_g = max(L_g, float(np.max(np.linalg.norm(agent.constraint_jacobian(a), axis=1))))
                if diff > 1e-12:
                    G_g = max(G_g, float(np.max(np.linalg.norm(
                        agent.constraint_jacobian(a) - agent.constraint_jacobian(b), axis=1))) / diff)
    declared_f = max(a.lipschitz_map for a in spec.agents)
    declared_g = max(a.lipschitz_constraint for a in spec.agents)
    declared_gg = max(a.lipschitz_constraint_grad for a in spec.agents)
    report.measured.update(L_f=L_f, L_g=L_g, G_g=G_g)
    report.add("L_f declared bound", L_f <= declared_f * (1 + eps) + eps, f"empirical {L_f:.4g} vs {declared_f:.4g}")
    report.add("L_g declared bound", L_g <= declared_g * (1 + eps) + eps, f"empirical {L_g:.4g} vs {declared_g:.4g}")
    if spec.mode is PerturbationMode.GRADIENT:
        report.add("G_g declared bound", G_g <= declared_gg * (1 + eps) + eps,
                   f"empirical {G_g:.4g} vs {declared_gg:.4g}")

    G_F = L_F = G_Fbar = 0.0
    stacks = [np.array([samples[i][s] for i in range(N)]) for s in range(num_samples)]
    us = [spec.map_sum(xs) for xs in stacks]
    grads = [spec.cost.grad(u) for u in us]
    fgrads = [spec.objective_gradient(xs) for xs in stacks]
    for s in range(num_samples):
        t = (s + 1) % num_samples
        L_F = max(L_F, float(np.linalg.norm(grads[s])))
        du = np.linalg.norm(us[s] - us[t])
        if du > 1e-12:
            G_F = max(G_F, float(np.linalg.norm(grads[s] - grads[t])) / du)
        dx = np.linalg.norm(stacks[s] - stacks[t])
        if dx > 1e-12:
            G_Fbar = max(G_Fbar, float(np.linalg.norm(fgrads[s] - fgrads[t])) / dx)
    report.measured.update(G_F=G_F, L_F=L_F, G_Fbar=G_Fbar)
    report.add("G_F declared bound", G_F <= spec.cost.lipschitz_grad * (1 + eps) + eps,
               f"empirical {G_F:.4g} vs {spec.cost.lipschitz_grad:.4g}")
    report.add("L_F declared bound", L_F <= spec.cost.grad_bound * (1 + eps) + eps,
               f"empirical {L_F:.4g} vs {spec.cost.grad_bound:.4g}")
    report.add("G_Fbar declared bound", G_Fbar <= spec.global_grad_lipschitz * (1 + eps) + eps,
               f"empirical {G_Fbar:.4g} vs {spec.global_grad_lipschitz:.4g}")
    return report
