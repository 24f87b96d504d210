"""
Demand-side management (DSM): customers schedule deferrable loads so that
the aggregate tracks a power bid.

The retailer pays ``pi_p`` per squared unit of load above the bid and
``pi_s`` per squared unit below it::

    cost(x) = pi_p ||(s - p)^+||^2 + pi_s ||(p - s)^+||^2,   s = sum_i Psi_i x_i

For the distributed solver the excess is carried by a slack ``z >= 0``
owned by an extra agent (the retailer, index ``N``), giving

    F(s, z) = pi_p ||z||^2 + pi_s ||z - s + p||^2
    s.t.    sum_i Psi_i x_i - p - z <= 0

with customer maps ``f_i(x) = (Psi_i x, 0)``, retailer map ``(0, z)``, and
the bid split evenly over the ``N + 1`` constraint terms.

Synthetic recipe: every customer owns one deferrable appliance with a 2-4
slot power profile of 0.5-3 kW. Column ``t`` of ``Psi_i`` is that profile
started at slot ``t`` (truncated at the horizon), and ``x_i[t] in [0, 1]``
is the fraction of a run started at ``t``, allowed only inside a random
start window. The bid is ``bid_scale`` times the expected aggregate when every
customer picks its start slot uniformly inside its window.
"""

import math
from dataclasses import dataclass, field
import numpy as np

from ..families import AffineConstraint, LinearMap, QuadraticCost, build_problem
from ..projections import Box, Polyhedron


@dataclass
class DsmInstance:
    horizon: int
    num_customers: int
    loads: list  # Psi_i, each (T, T)
    bid: np.ndarray
    price_p: float
    price_s: float
    local_sets: list
    seed: int
    z_max: float = math.inf
    name: str = "dsm"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.price_s < self.price_p:
            raise ValueError("prices must satisfy 0 < pi_s < pi_p")

    def aggregate(self, x):
        """``sum_i Psi_i x_i`` over the customer rows of ``x``."""
        x = np.asarray(x, dtype=float)
        return sum(P @ xi for P, xi in zip(self.loads, x[:self.num_customers]))

    def cost(self, x):
        """Scheduling cost at customer schedules ``x`` (rows beyond ``N`` are ignored)."""
        d = self.aggregate(x) - self.bid
        return float(self.price_p * np.sum(np.maximum(d, 0.0) ** 2)
                     + self.price_s * np.sum(np.maximum(-d, 0.0) ** 2))

    def cost_gradient(self, x):
        d = self.aggregate(x) - self.bid
        w = 2 * self.price_p * np.maximum(d, 0.0) - 2 * self.price_s * np.maximum(-d, 0.0)
        return np.array([P.T @ w for P in self.loads])

    def unscheduled(self):
        """Reference profile without coordination: every customer at the midpoint of its box."""
        return np.array([0.5 * (s.bounding_box()[0] + s.bounding_box()[1]) for s in self.local_sets])

    def unscheduled_cost(self):
        return self.cost(self.unscheduled())

    def optimal_slack(self, x):
        """The excess ``(s - p)^+`` that minimizes the reformulated cost for fixed ``x``."""
        return np.maximum(self.aggregate(x) - self.bid, 0.0)

    def stack_with_slack(self, x):
        """Customer schedules plus the retailer's optimal slack as the last row."""
        x = np.asarray(x, dtype=float)[:self.num_customers]
        return np.vstack([x, self.optimal_slack(x)[None, :]])

    def to_dict(self):
        return {
            "horizon": self.horizon, "num_customers": self.num_customers,
            "loads": [P.tolist() for P in self.loads], "bid": self.bid.tolist(),
            "price_p": self.price_p, "price_s": self.price_s,
            "local_sets": [s.to_dict() for s in self.local_sets],
            "seed": self.seed, "z_max": self.z_max, "name": self.name,
        }


def _profile_matrix(profile, T):
    P = np.zeros((T, T))
    for t in range(T):
        end = min(T, t + profile.size)
        P[t:end, t] = profile[:end - t]
    return P


def generate_dsm_instance(N, T, seed=0, polyhedral=False, bid_scale=1.0):
    """Draw a synthetic :class:`DsmInstance` (see the module docstring for the recipe)."""
    if N < 2 or T < 2:
        raise ValueError("need at least 2 customers and 2 time slots")
    rng = np.random.default_rng(seed)
    loads, sets, expected = [], [], []
    for _ in range(N):
        duration = int(rng.integers(2, 5))
        profile = rng.uniform(0.5, 3.0, size=duration)
        loads.append(_profile_matrix(profile, T))
        width = int(rng.integers(max(2, T // 4), max(3, T // 2) + 1))
        start = int(rng.integers(0, T - width + 1))
        upper = np.zeros(T)
        upper[start:start + width] = 1.0
        lower = np.zeros(T)
        if polyhedral:
            # at most one full run in total
            sets.append(Polyhedron(np.ones((1, T)), [1.0], lower, upper))
        else:
            sets.append(Box(lower, upper))
        expected.append(upper / width)
    bid = bid_scale * sum(P @ x for P, x in zip(loads, expected))
    z_max = float(np.max(sum(P @ s.bounding_box()[1] for P, s in zip(loads, sets)))) + 1.0
    return DsmInstance(T, N, loads, bid, 1.0 / N, 0.8 / N, sets, seed, z_max,
                       name=f"dsm-N{N}-T{T}-s{seed}")


def dsm_problem(inst):
    """Reformulate ``inst`` as a network problem with ``N + 1`` agents (retailer last)."""
    N, T = inst.num_customers, inst.horizon
    n = N + 1
    zeros, eye = np.zeros((T, T)), np.eye(T)
    maps = [LinearMap(np.vstack([P, zeros])) for P in inst.loads] + [LinearMap(np.vstack([zeros, eye]))]
    share = inst.bid / n
    cons = [AffineConstraint(P, share) for P in inst.loads] + [AffineConstraint(-eye, share)]
    sets = list(inst.local_sets) + [Box(np.zeros(T), np.full(T, inst.z_max))]
    pp, ps, p = inst.price_p, inst.price_s, inst.bid
    H = 2 * np.block([[ps * eye, -ps * eye], [-ps * eye, (pp + ps) * eye]])
    h = np.concatenate([-2 * ps * p, 2 * ps * p])
    cost = QuadraticCost(H, h, ps * float(p @ p))
    # customers idle, slack covering the bid's excess plus a margin
    x_bar = [s.bounding_box()[0] for s in inst.local_sets]
    margin = max(float(np.mean(p)), 1.0)
    z_bar = np.maximum(inst.aggregate(x_bar) - p, 0.0) + margin
    if np.any(z_bar > inst.z_max):
        raise ValueError("slack bound too small for the Slater point")
    return build_problem(cost, maps, cons, sets, x_bar + [z_bar], dual_lower_bound=0.0,
                         slack_margin=1.0, name=inst.name,
                         meta={"family": "dsm", "N": N, "T": T, "seed": inst.seed})


def generate_dsm(N, T, seed=0, polyhedral=False, bid_scale=1.0):
    """Return ``(DsmInstance, ProblemSpec)`` for a synthetic DSM problem."""
    inst = generate_dsm_instance(N, T, seed, polyhedral, bid_scale)
    return inst, dsm_problem(inst)


def dsm_optimal_cost(inst, tol=1e-9, max_iters=200_000):
    """
    Minimal scheduling cost by accelerated projected gradient on the
    customers' schedules (the cost is smooth and convex in ``x``).

    Returns
    -------
    x : ndarray, shape (N, T)
    cost : float
    """
    from ..oracle import _fista

    B = np.hstack(inst.loads)
    L = 2 * max(inst.price_p, inst.price_s) * float(np.linalg.norm(B, 2)) ** 2

    def proj(v, _t):
        return np.array([s(vi) for s, vi in zip(inst.local_sets, v)])

    x, _, _ = _fista(inst.unscheduled(), lambda z: (inst.cost(z), inst.cost_gradient(z)),
                     proj, tol, max_iters, L)
    return x, inst.cost(x)


def dsm_cost_reporter(inst):
    """Objective callback for traces: scheduling cost of the customer rows of a stacked point."""
    return lambda x: inst.cost(np.asarray(x)[:inst.num_customers])


def dsm_instance_from_dict(doc):
    from ..projections import set_from_dict

    return DsmInstance(doc["horizon"], doc["num_customers"], [np.asarray(P) for P in doc["loads"]],
                       np.asarray(doc["bid"]), doc["price_p"], doc["price_s"],
                       [set_from_dict(s) for s in doc["local_sets"]], doc["seed"],
                       doc.get("z_max", math.inf), doc.get("name", "dsm"))
