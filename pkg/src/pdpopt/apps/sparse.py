"""
Distributed sparse regression with an l1 budget split across agents.

Agent ``i`` holds a block ``x_i`` of the coefficient vector and the columns
``A_i`` of the design matrix; the network minimizes ``||sum_i A_i x_i - b||^2``
subject to ``sum_i ||x_i||_1 <= c``. The l1 constraint is non-smooth, so the
problem runs with proximal perturbation (clipped soft thresholding).
"""

import math

import numpy as np

from ..families import L1Constraint, LinearMap, QuadraticCost, build_problem
from ..projections import Box


def generate_sparse_regression(N, K, M, seed=0, l1_budget=None, box_bound=2.0, noise=0.01,
                               support_size=2):
    """
    Planted sparse regression instance.

    Parameters
    ----------
    N, K : int
        Agents and coefficients per agent.
    M : int
        Number of measurements.
    seed : int
    l1_budget : float, optional
        Total l1 budget ``c``; defaults to the planted signal's l1 norm.
    box_bound : float
        Every coefficient lies in ``[-box_bound, box_bound]``.
    noise : float
        Standard deviation of the measurement noise.
    support_size : int
        Number of nonzero planted coefficients.

    Returns
    -------
    ProblemSpec
        ``meta`` records the planted signal and its support.
    """
    if min(N, K, M) <= 0:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    n_total = N * K
    support = np.sort(rng.choice(n_total, size=min(support_size, n_total), replace=False))
    signal = np.zeros(n_total)
    signal[support] = rng.uniform(0.5, 1.5, size=support.size) * rng.choice([-1.0, 1.0], size=support.size)
    design = rng.standard_normal((M, n_total)) / math.sqrt(M)
    b = design @ signal + noise * rng.standard_normal(M)
    c = float(np.abs(signal).sum()) if l1_budget is None else float(l1_budget)
    if c < 0:
        raise ValueError("l1_budget must be non-negative")
    box = Box(np.full(K, -box_bound), np.full(K, box_bound))
    maps = [LinearMap(design[:, i * K:(i + 1) * K]) for i in range(N)]
    cons = [L1Constraint(c / N, box) for _ in range(N)]
    cost = QuadraticCost(2 * np.eye(M), -2 * b, float(b @ b))
    return build_problem(cost, maps, cons, [box] * N, [np.zeros(K)] * N,
                         dual_lower_bound=0.0, slack_margin=1.0,
                         name=f"sparse-N{N}-K{K}-M{M}-s{seed}",
                         meta={"family": "sparse", "seed": seed, "budget": c,
                               "signal": signal.tolist(), "support": support.tolist()})
