"""
Built-in problem families: quadratic global cost, linear local maps, affine
or l1 coupling constraints, and box/polyhedral local sets.

Problems assembled from these pieces carry a JSON description and can be
round-tripped through :func:`problem_to_dict` / :func:`problem_from_dict`.
Arbitrary user callbacks work with the solvers but cannot be serialized.
"""

import json
import math

import numpy as np

from .problem import (AgentFunctions, Dimensions, GlobalCost, ProblemSpec,
                      slater_certificate)
from .projections import Box, Polyhedron, set_from_dict


class QuadraticCost:
    """``F(u) = 0.5 u^T H u + h^T u + c`` with symmetric PSD ``H``.

    ``eval`` also accepts a batch of points stacked along the first axis.
    """

    def __init__(self, H, h, c=0.0):
        self.H = np.atleast_2d(np.asarray(H, dtype=float))
        self.h = np.asarray(h, dtype=float)
        self.c = float(c)
        if not np.allclose(self.H, self.H.T):
            raise ValueError("H must be symmetric")

    def eval(self, u):
        u = np.asarray(u, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", u, self.H, u) + u @ self.h + self.c

    def grad(self, u):
        return self.H @ u + self.h

    @property
    def lipschitz_grad(self):
        return float(np.linalg.norm(self.H, 2))

    def grad_bound_on_box(self, lo, hi):
        """Bound on ``||grad F(u)||`` over the box ``lo <= u <= hi`` via interval arithmetic."""
        a, b = self.H * lo, self.H * hi
        upper = np.maximum(a, b).sum(axis=1) + self.h
        lower = np.minimum(a, b).sum(axis=1) + self.h
        return float(np.linalg.norm(np.maximum(np.abs(upper), np.abs(lower))))

    def to_dict(self):
        return {"kind": "quadratic", "H": self.H.tolist(), "h": self.h.tolist(), "c": self.c}


class LinearMap:
    """``f(x) = A x + offset``."""

    def __init__(self, A, offset=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.offset = np.zeros(self.A.shape[0]) if offset is None else np.asarray(offset, dtype=float)

    def value(self, x):
        return self.A @ x + self.offset

    def jacobian(self, x):
        return self.A

    @property
    def lipschitz(self):
        return float(np.max(np.linalg.norm(self.A, axis=1)))

    def to_dict(self):
        return {"kind": "linear", "A": self.A.tolist(), "offset": self.offset.tolist()}


class AffineConstraint:
    """``g(x) = C x - d`` (smooth, zero curvature)."""

    kind = "affine"

    def __init__(self, C, d):
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        self.d = np.asarray(d, dtype=float).reshape(-1)

    def value(self, x):
        return self.C @ x - self.d

    def jacobian(self, x):
        return self.C

    @property
    def lipschitz(self):
        return float(np.max(np.linalg.norm(self.C, axis=1)))

    def to_dict(self):
        return {"kind": "affine", "C": self.C.tolist(), "d": self.d.tolist()}


def soft_threshold(v, t):
    """Closed-form prox of ``t * ||.||_1``: ``(v - t)^+ + (-v - t)^+``, taken with sign."""
    return np.maximum(v - t, 0.0) - np.maximum(-v - t, 0.0)


class L1Constraint:
    """``g(x) = ||x||_1 - budget`` (one non-smooth constraint row).

    The prox over a box is the soft threshold followed by clipping, which is
    exact because both the objective and the box separate by coordinate.
    """

    kind = "l1"

    def __init__(self, budget, box):
        self.budget = float(budget)
        self.box = box

    def value(self, x):
        return np.array([np.abs(x).sum() - self.budget])

    def subgradient(self, x):
        return np.sign(x)[None, :]

    def prox(self, v, weights, rho):
        return self.box(soft_threshold(v, float(weights[0]) * rho))

    def lipschitz(self, dim):
        return math.sqrt(dim)

    def to_dict(self):
        return {"kind": "l1", "budget": self.budget}


def make_agent(fmap, constraint, local_set):
    """Assemble :class:`AgentFunctions` from family objects."""
    k = local_set.dim
    doc = {"map": fmap.to_dict(), "constraint": constraint.to_dict(), "set": local_set.to_dict()}
    common = dict(
        map=fmap.value,
        map_jacobian=fmap.jacobian,
        constraint=constraint.value,
        project=local_set,
        diameter_bound=local_set.diameter_bound,
        lipschitz_map=fmap.lipschitz,
        doc=doc,
    )
    if isinstance(constraint, L1Constraint):
        if not isinstance(local_set, Box):
            raise ValueError("the l1 constraint prox is only available over box sets")
        return AgentFunctions(constraint_prox=constraint.prox,
                              constraint_subgradient=constraint.subgradient,
                              lipschitz_constraint=constraint.lipschitz(k), **common)
    return AgentFunctions(constraint_jacobian=constraint.jacobian,
                          lipschitz_constraint=constraint.lipschitz,
                          lipschitz_constraint_grad=0.0, **common)


def _map_range_box(maps, sets):
    lo = 0.0
    hi = 0.0
    for fmap, s in zip(maps, sets):
        slo, shi = s.bounding_box()
        a, b = fmap.A * slo, fmap.A * shi
        lo = lo + np.minimum(a, b).sum(axis=1) + fmap.offset
        hi = hi + np.maximum(a, b).sum(axis=1) + fmap.offset
    return lo, hi


def build_problem(cost, maps, constraints, sets, slater_point, dual_lower_bound=0.0,
                  slack_margin=1.0, name="problem", meta=None):
    """
    Assemble a :class:`ProblemSpec` from family objects, deriving every
    Lipschitz constant the solver and validators need.
    """
    agents = [make_agent(f, g, s) for f, g, s in zip(maps, constraints, sets)]
    n = len(agents)
    k = sets[0].dim
    m = maps[0].A.shape[0]
    p = np.asarray(constraints[0].value(np.zeros(k))).size
    lo, hi = _map_range_box(maps, sets)
    gcost = GlobalCost(eval=cost.eval, grad=cost.grad, lipschitz_grad=cost.lipschitz_grad,
                       grad_bound=cost.grad_bound_on_box(lo, hi), doc=cost.to_dict())
    B = np.hstack([f.A for f in maps])
    g_fbar = float(np.linalg.norm(B.T @ cost.H @ B, 2))
    slater = slater_certificate(agents, slater_point, dual_lower_bound, slack_margin)
    return ProblemSpec(Dimensions(n, k, m, p), gcost, tuple(agents), slater, g_fbar,
                       name=name, meta=dict(meta or {}))


# --------------------------------------------------------------------------
# JSON round trip

def problem_to_dict(spec):
    if spec.cost.doc is None or any(a.doc is None for a in spec.agents):
        raise TypeError("only problems built from the built-in families can be serialized")
    return {
        "format": "pdpopt-problem/1",
        "name": spec.name,
        "cost": spec.cost.doc,
        "agents": [a.doc for a in spec.agents],
        "slater": {
            "point": [np.asarray(p).tolist() for p in spec.slater.point],
            "dual_lower_bound": spec.slater.dual_lower_bound,
            "slack_margin": spec.slater.slack_margin,
        },
        "meta": spec.meta,
    }


def _cost_from_dict(doc):
    if doc["kind"] != "quadratic":
        raise ValueError(f"unknown cost kind {doc['kind']!r}")
    return QuadraticCost(doc["H"], doc["h"], doc.get("c", 0.0))


def _constraint_from_dict(doc, local_set):
    if doc["kind"] == "affine":
        return AffineConstraint(doc["C"], doc["d"])
    if doc["kind"] == "l1":
        return L1Constraint(doc["budget"], local_set)
    raise ValueError(f"unknown constraint kind {doc['kind']!r}")


def problem_from_dict(doc):
    cost = _cost_from_dict(doc["cost"])
    maps, cons, sets = [], [], []
    for a in doc["agents"]:
        if a["map"]["kind"] != "linear":
            raise ValueError(f"unknown map kind {a['map']['kind']!r}")
        s = set_from_dict(a["set"])
        sets.append(s)
        maps.append(LinearMap(a["map"]["A"], a["map"].get("offset")))
        cons.append(_constraint_from_dict(a["constraint"], s))
    sl = doc["slater"]
    return build_problem(cost, maps, cons, sets, [np.asarray(p) for p in sl["point"]],
                         sl.get("dual_lower_bound", 0.0), sl.get("slack_margin", 1.0),
                         name=doc.get("name", "problem"), meta=doc.get("meta", {}))


def save_problem(spec, path):
    with open(path, "w") as fh:
        json.dump(problem_to_dict(spec), fh, indent=1)


def load_problem(path):
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


# --------------------------------------------------------------------------
# small random instances

def random_qp(num_agents=5, dim=2, map_dim=2, seed=0, demand_fraction=0.25, curvature=1.0,
              coupling_scale=3.0):
    """
    Random convex QP with one active coupling constraint.

    Each agent maps its box-constrained ``x_i in [-1, 1]^K`` linearly into
    ``R^M``; the cost pulls the aggregate toward a target that violates the
    coverage constraint ``sum_i c_i^T x_i >= r``, so the constraint is active
    at the optimum and the default start ``x = 0`` is infeasible.
    ``curvature`` scales the cost ``F(u) = (curvature / 2) ||u - t||^2`` and
    ``coupling_scale`` multiplies the constraint (same feasible set, duals
    divided by the scale).
    """
    rng = np.random.default_rng(seed)
    n, k, m = num_agents, dim, map_dim
    cs = [rng.uniform(0.5, 1.5, size=k) * rng.choice([-1.0, 1.0], size=k) for _ in range(n)]
    # the first map row reads the coverage c_i^T x_i, so the cost sees it directly
    maps = []
    for c in cs:
        A = rng.normal(size=(m, k))
        A[0] = c
        maps.append(LinearMap(A / math.sqrt(n)))
    total_reach = sum(np.abs(c).sum() for c in cs)
    r = demand_fraction * total_reach
    cons = [AffineConstraint(-coupling_scale * c[None, :], [-coupling_scale * r / n]) for c in cs]
    sets = [Box(-np.ones(k), np.ones(k)) for _ in range(n)]
    # target reached by a point that moves against the coverage direction
    x_target = [-0.3 * np.sign(c) for c in cs]
    t = sum(f.A @ x for f, x in zip(maps, x_target))
    cost = QuadraticCost(curvature * np.eye(m), -curvature * t, 0.5 * curvature * float(t @ t))
    slater_point = [0.75 * np.sign(c) for c in cs]
    return build_problem(cost, maps, cons, sets, slater_point, dual_lower_bound=0.0,
                         slack_margin=1.0, name=f"qp-{seed}",
                         meta={"family": "random_qp", "seed": seed, "curvature": curvature,
                               "coupling_scale": coupling_scale})
