"""
Independent ground truth for tests: a centralized reference solver, an
exhaustive grid search for tiny instances, finite-difference gradient checks
and a grid-search prox.

Nothing in here is used by the solvers themselves.
"""

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ._numdiff import central_jacobian, relative_error
from .errors import InfeasibleProblem, NoConvergence, TooLarge
from .problem import PerturbationMode, _sample_in_set
from .projections import Box

GRID_POINT_LIMIT = 20_000_000


@dataclass
class ReferenceSolution:
    x_star: np.ndarray
    lambda_star: np.ndarray
    objective: float
    kkt_residuals: dict
    method: str
    iterations: int
    tol: float
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"x_star": self.x_star.tolist(), "lambda_star": self.lambda_star.tolist(),
                "objective": self.objective, "kkt_residuals": self.kkt_residuals,
                "method": self.method, "iterations": self.iterations, "tol": self.tol,
                "meta": self.meta}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.asarray(doc["x_star"], dtype=float), np.asarray(doc["lambda_star"], dtype=float),
                   float(doc["objective"]), dict(doc["kkt_residuals"]), doc["method"],
                   int(doc["iterations"]), float(doc["tol"]), dict(doc.get("meta", {})))


def kkt_residuals(spec, x, lam):
    """
    Primal feasibility ``||(sum g)^+||``, complementary slackness
    ``|lam^T sum g|`` and a stationarity measure.

    Stationarity is the unit-step projected-gradient residual
    ``||x - P_X(x - grad_x L)||`` for smooth constraints and the prox-gradient
    residual ``||x - prox(x - grad F)||`` for non-smooth ones.
    """
    x = spec.stack(x)
    gsum = spec.constraint_sum(x)
    if spec.mode is PerturbationMode.PROXIMAL:
        grad = spec.objective_gradient(x)
        step = np.array([a.constraint_prox(xi - gi, lam, 1.0) for a, xi, gi in zip(spec.agents, x, grad)])
    else:
        step = spec.project(x - spec.lagrangian_gradient(x, lam))
    return {
        "primal_feasibility": float(np.linalg.norm(np.maximum(gsum, 0.0))),
        "complementary_slackness": abs(float(lam @ gsum)),
        "stationarity": float(np.linalg.norm(x - step)),
    }


def _fista(x0, fun_grad, prox, tol, max_iter, L0=1.0, nonsmooth=None):
    """
    Accelerated proximal gradient with backtracking and adaptive restart.

    ``fun_grad(x) -> (value, gradient)``; ``prox(v, t)`` handles the
    non-smooth part (a projection when there is none) whose value is
    ``nonsmooth(x)``. Stops when the gradient-mapping norm drops below ``tol``.
    """
    extra = (lambda z: 0.0) if nonsmooth is None else nonsmooth
    x = prox(x0, 1.0 / L0)
    y, t, L = x.copy(), 1.0, L0
    fx = fun_grad(x)[0] + extra(x)
    for it in range(1, max_iter + 1):
        fy, gy = fun_grad(y)
        while True:
            x_new = prox(y - gy / L, 1.0 / L)
            d = x_new - y
            dd = float(np.sum(d * d))
            f_new, g_new = fun_grad(x_new)
            excess = f_new - fy - float(np.sum(gy * d))
            if abs(excess) > 1e-10 * max(1.0, abs(fy)):
                ok = excess <= 0.5 * L * dd
            else:
                # value differences are at roundoff level; test the gradients instead
                ok = float(np.sum((g_new - gy) * d)) <= L * dd
            if ok or dd == 0.0:
                break
            L *= 2.0
        gap = L * float(np.linalg.norm(x_new - y))
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        total_new = f_new + extra(x_new)
        if total_new > fx and t > 1.0:
            y, t = x.copy(), 1.0
        else:
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            x, fx, t = x_new, total_new, t_new
        if gap < tol:
            return x, it, L
        L *= 0.9
    return x, max_iter, L


def _cache_path(spec, tol, cache_dir):
    from .families import problem_to_dict

    try:
        doc = problem_to_dict(spec)
    except TypeError:
        return None
    key = hashlib.sha256(json.dumps({"problem": doc, "tol": tol}, sort_keys=True).encode()).hexdigest()[:24]
    return os.path.join(cache_dir, f"reference-{key}.json")


def solve_reference(spec, tol=1e-6, max_outer=200, inner_iters=20_000, cache_dir=None):
    """
    Solve a convex instance to KKT residuals below ``tol``.

    Smooth constraints use an augmented Lagrangian method with accelerated
    projected-gradient inner solves. A single non-smooth constraint
    (``P = 1``, proximal mode) uses bisection on the multiplier with
    accelerated proximal-gradient inner solves.

    Parameters
    ----------
    spec : ProblemSpec
    tol : float
    cache_dir : str, optional
        Directory for a JSON cache keyed by a hash of the instance; defaults
        to ``$PDPOPT_CACHE_DIR`` when set. Only serializable problems are cached.

    Raises
    ------
    NoConvergence
        If the residuals stay above ``tol``.
    """
    cache_dir = cache_dir or os.environ.get("PDPOPT_CACHE_DIR")
    path = _cache_path(spec, tol, cache_dir) if cache_dir else None
    if path and os.path.exists(path):
        with open(path) as fh:
            return ReferenceSolution.from_dict(json.load(fh))
    if spec.mode is PerturbationMode.PROXIMAL:
        ref = _solve_prox_bisection(spec, tol, inner_iters)
    else:
        ref = _solve_augmented_lagrangian(spec, tol, max_outer, inner_iters)
    worst = max(ref.kkt_residuals.values())
    if not worst < tol:
        raise NoConvergence(f"reference solve stopped with KKT residual {worst:.3e} >= {tol:.1e}")
    if path:
        os.makedirs(cache_dir, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(ref.to_dict(), fh)
    return ref


def _solve_augmented_lagrangian(spec, tol, max_outer, inner_iters):
    n, k, p = spec.num_agents, spec.dims.primal_dim, spec.dims.constraint_dim
    target = 0.1 * tol
    lam = np.zeros(p)
    c = 1.0
    x = spec.project(np.zeros((n, k)))
    total = 0
    prev_feas = math.inf
    L = 1.0

    for _ in range(max_outer):
        def fun_grad(z, lam=lam, c=c):
            gsum = spec.constraint_sum(z)
            mu = np.maximum(lam + c * gsum, 0.0)
            val = spec.objective(z) + (float(mu @ mu) - float(lam @ lam)) / (2 * c)
            return val, spec.lagrangian_gradient(z, mu)

        x, its, L = _fista(x, fun_grad, lambda v, t: spec.project(v), 0.01 * target, inner_iters, L)
        total += its
        gsum = spec.constraint_sum(x)
        lam = np.maximum(lam + c * gsum, 0.0)
        res = kkt_residuals(spec, x, lam)
        if max(res.values()) < target:
            break
        feas = res["primal_feasibility"]
        if feas > 0.25 * prev_feas:
            c *= 5.0
        prev_feas = feas
    res = kkt_residuals(spec, x, lam)
    return ReferenceSolution(x, lam, float(spec.objective(x)), res, "augmented-lagrangian", total, tol)


def _solve_prox_bisection(spec, tol, inner_iters):
    if spec.dims.constraint_dim != 1:
        raise NoConvergence("the proximal reference solver handles a single coupling constraint only")
    n, k = spec.num_agents, spec.dims.primal_dim
    target = 0.1 * tol
    state = {"x": spec.project(np.zeros((n, k))), "L": 1.0, "its": 0}

    def solve_at(lam_val):
        lam = np.array([lam_val])

        def fun_grad(z):
            return spec.objective(z), spec.objective_gradient(z)

        def prox(v, t):
            return np.array([a.constraint_prox(vi, lam, t) for a, vi in zip(spec.agents, v)])

        def penalty(z):
            return lam_val * float(spec.constraint_sum(z)[0])

        x, its, L = _fista(state["x"], fun_grad, prox, 0.01 * target, inner_iters, state["L"], penalty)
        state.update(x=x, L=L, its=state["its"] + its)
        return x, float(spec.constraint_sum(x)[0])

    x, g = solve_at(0.0)
    lam = 0.0
    if g > 0:
        lo, hi = 0.0, 1.0
        x, g = solve_at(hi)
        while g > 0:
            lo, hi = hi, 2 * hi
            if hi > 1e12:
                raise NoConvergence("no multiplier makes the constraint feasible")
            x, g = solve_at(hi)
        x_hi = x
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            xm, gm = solve_at(mid)
            if gm > 0:
                lo = mid
            else:
                hi, x_hi = mid, xm
            if hi - lo < 1e-3 * target and abs(gm) < target:
                break
            if max(kkt_residuals(spec, x_hi, np.array([hi])).values()) < target:
                break
        x, lam = x_hi, hi
    lam_arr = np.array([lam])
    res = kkt_residuals(spec, x, lam_arr)
    return ReferenceSolution(x, lam_arr, float(spec.objective(x)), res, "prox-bisection", state["its"], tol)


def saddle_slack(spec, ref, num_samples=100, seed=0):
    """
    Smallest slack of the saddle inequalities
    ``L(x*, lam) <= L(x*, lam*) <= L(x, lam*)`` over random ``x in X`` and
    ``lam`` in the dual ball.
    """
    rng = np.random.default_rng(seed)
    x_star, lam_star = spec.stack(ref.x_star), ref.lambda_star
    mid = spec.lagrangian(x_star, lam_star)
    worst = math.inf
    for _ in range(num_samples):
        x = np.array([_sample_in_set(a, spec.dims.primal_dim, rng) for a in spec.agents])
        lam = np.abs(rng.standard_normal(spec.dims.constraint_dim))
        lam *= spec.d_lambda * rng.random() / max(np.linalg.norm(lam), 1e-300)
        worst = min(worst, mid - spec.lagrangian(x_star, lam), spec.lagrangian(x, lam_star) - mid)
    return worst


# --------------------------------------------------------------------------
# grid search

def _agent_grid(agent, dim, resolution):
    owner = agent.project
    if not hasattr(owner, "bounding_box"):
        raise TooLarge("grid search needs local sets with a bounding box")
    lo, hi = owner.bounding_box()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise TooLarge("grid search needs bounded local sets")
    axes = [np.linspace(l, h, int(math.floor((h - l) / resolution + 1e-9)) + 1) if h > l else np.array([l])
            for l, h in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    if not isinstance(owner, Box):
        pts = pts[[owner.contains(q, 1e-12) for q in pts]]
    return pts


def _cost_batch(cost, U):
    try:
        vals = np.asarray(cost.eval(U), dtype=float)
        if vals.shape == (U.shape[0],):
            return vals
    except Exception:
        pass
    return np.array([cost.eval(u) for u in U])


def brute_force_grid(spec, resolution, chunk=1_000_000):
    """
    Exhaustive search over a grid covering every local set's bounding box.

    Grid points outside a local set are discarded; the coupling constraint
    is accepted up to a slack of ``resolution`` times the constraints'
    Lipschitz constants, so the grid neighbour of the optimum survives.
    Ties resolve to the lexicographically smallest point.

    Returns
    -------
    x_best : ndarray, shape (N, K)
    objective : float

    Raises
    ------
    TooLarge
        If ``N * K > 4`` or the grid has more than ``GRID_POINT_LIMIT`` points.
    InfeasibleProblem
        If no grid point satisfies the coupling constraint.
    """
    n, k = spec.num_agents, spec.dims.primal_dim
    if n * k > 4:
        raise TooLarge(f"grid search limited to N*K <= 4, got {n * k}")
    grids = [_agent_grid(a, k, resolution) for a in spec.agents]
    sizes = [g.shape[0] for g in grids]
    if math.prod(sizes) > GRID_POINT_LIMIT:
        raise TooLarge(f"grid has {math.prod(sizes)} points (limit {GRID_POINT_LIMIT})")
    f_tab = [np.array([a.map(q) for q in g]) for a, g in zip(spec.agents, grids)]
    g_tab = [np.array([np.atleast_1d(a.constraint(q)) for q in g]) for a, g in zip(spec.agents, grids)]
    slack = resolution * sum(max(a.lipschitz_constraint, 1.0) for a in spec.agents)
    total = math.prod(sizes)
    best_val, best_idx = math.inf, None
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk))
        idx = np.unravel_index(flat, sizes)
        U = sum(t[i] for t, i in zip(f_tab, idx))
        G = sum(t[i] for t, i in zip(g_tab, idx))
        ok = np.all(G <= slack, axis=1)
        if not np.any(ok):
            continue
        vals = _cost_batch(spec.cost, U[ok])
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_idx = float(vals[j]), int(flat[ok][j])
    if best_idx is None:
        raise InfeasibleProblem("no grid point satisfies the coupling constraint")
    idx = np.unravel_index(best_idx, sizes)
    x = np.array([g[i] for g, i in zip(grids, idx)])
    return x, best_val


# --------------------------------------------------------------------------
# derivative and prox checks

def fd_check(fun, grad, points, h=1e-6):
    """Largest relative error between ``grad`` and central differences of ``fun`` over ``points``."""
    if h <= 0:
        raise ValueError("h must be positive")
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        worst = max(worst, relative_error(np.asarray(grad(x), dtype=float), central_jacobian(fun, x, h)))
    return worst


def prox_grid_oracle(g, v, weight, rho, resolution, lower=None, upper=None):
    """
    Grid minimizer of ``weight * g(a) + ||a - v||^2 / (2 rho)`` over a box.

    Parameters
    ----------
    g : callable
        Vectorized: maps a batch ``(n, K)`` of points to ``(n,)`` values.
    v : array_like, shape (K,)
    weight, rho : float
    resolution : float
        Grid spacing.
    lower, upper : array_like, optional
        Box bounds; default to ``v -/+ (1 + |weight| rho K)``.

    Raises
    ------
    TooLarge
        If ``K > 2``.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    K = v.size
    if K > 2:
        raise TooLarge("prox grid search limited to K <= 2")
    reach = 1.0 + abs(weight) * rho * K
    lower = v - reach if lower is None else np.broadcast_to(np.asarray(lower, dtype=float), (K,))
    upper = v + reach if upper is None else np.broadcast_to(np.asarray(upper, dtype=float), (K,))
    axes = [np.arange(l, h + 0.5 * resolution, resolution) for l, h in zip(lower, upper)]
    axes = [np.clip(a, l, h) for a, l, h in zip(axes, lower, upper)]
    if math.prod(a.size for a in axes) > GRID_POINT_LIMIT:
        raise TooLarge("prox grid too fine")
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, K)
    vals = weight * np.asarray(g(pts), dtype=float) + np.sum((pts - v) ** 2, axis=1) / (2 * rho)
    return pts[int(np.argmin(vals))]
