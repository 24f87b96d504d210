"""
Comparison methods sharing the solver's trace format.

* centralized primal-dual (PD) and centralized PDP steps on the full problem;
* the distributed primal-dual method without perturbation (``alpha = x``,
  ``beta = tilde_lambda``), which is :func:`pdpopt.solver.run` with
  ``perturb=False``;
* distributed dual subgradient (DDS) for the demand-side management problem,
  where every agent solves its local Lagrangian subproblem exactly.
"""

import math

import numpy as np

from .errors import InnerSolveFailure, ModeMismatch
from .network import mix
from .problem import PerturbationMode, project_dual_ball
from .projections import Box
from .solver import RunningAverage, RunTrace, run, trace_row


def _stacked_slope(spec, x):
    return [a.constraint_slope(xi) for a, xi in zip(spec.agents, x)]


def centralized_pd_step(x, lam, spec, a_k, d_lambda=None):
    """
    One centralized primal-dual step::

        x+   = P_X(x - a_k grad_x L(x, lam))
        lam+ = P_D(lam + a_k sum_i g_i(x_i))
    """
    d = spec.d_lambda if d_lambda is None else d_lambda
    x = spec.stack(x)
    x_new = spec.project(x - a_k * spec.lagrangian_gradient(x, lam))
    lam_new = project_dual_ball(lam + a_k * spec.constraint_sum(x), d)
    return x_new, lam_new


def centralized_perturbation(x, lam, spec, rho1, rho2, mode=None, d_lambda=None):
    """Perturbation points ``(alpha, beta)`` computed with exact global quantities."""
    d = spec.d_lambda if d_lambda is None else d_lambda
    mode = spec.mode if mode is None else PerturbationMode(mode)
    x = spec.stack(x)
    grad_cost = spec.objective_gradient(x)
    alpha = np.empty_like(x)
    for i, agent in enumerate(spec.agents):
        if mode is PerturbationMode.PROXIMAL:
            if agent.constraint_prox is None:
                raise ModeMismatch("proximal perturbation needs a constraint prox callback")
            alpha[i] = agent.constraint_prox(x[i] - rho1 * grad_cost[i], lam, rho1)
        else:
            if agent.constraint_jacobian is None:
                raise ModeMismatch("gradient perturbation needs the constraint Jacobian")
            alpha[i] = agent.project(x[i] - rho1 * (grad_cost[i] + agent.constraint_jacobian(x[i]).T @ lam))
    beta = project_dual_ball(lam + rho2 * spec.constraint_sum(x), d)
    return alpha, beta


def centralized_pdp_step(x, lam, spec, a_k, rho1, rho2, mode=None, d_lambda=None):
    """
    One centralized PDP step: perturbation points, then::

        x+   = P_X(x - a_k [grad F(x) + J_g(x)^T beta])
        lam+ = P_D(lam + a_k sum_i g_i(alpha_i))

    With ``rho1 = rho2 = 0`` and an inactive dual ball this coincides with
    :func:`centralized_pd_step`.
    """
    d = spec.d_lambda if d_lambda is None else d_lambda
    x = spec.stack(x)
    alpha, beta = centralized_perturbation(x, lam, spec, rho1, rho2, mode, d)
    grad_cost = spec.objective_gradient(x)
    slopes = _stacked_slope(spec, x)
    x_new = np.array([a.project(xi - a_k * (gc + s.T @ beta))
                      for a, xi, gc, s in zip(spec.agents, x, grad_cost, slopes)])
    lam_new = project_dual_ball(lam + a_k * spec.constraint_sum(alpha), d)
    return x_new, lam_new


def centralized_run(spec, config, perturb=True, initial_x=None, report_objective=None):
    """
    Centralized PD (``perturb=False``) or PDP iteration with the same step,
    averaging and trace conventions as the distributed solver.

    Returns
    -------
    x : ndarray, shape (N, K)
    lam : ndarray, shape (P,)
    trace : RunTrace
    """
    config = config.resolve(spec)
    objective = spec.objective if report_objective is None else report_objective
    x0 = np.zeros((spec.num_agents, spec.dims.primal_dim)) if initial_x is None else initial_x
    x = spec.project(x0)
    lam = np.zeros(spec.dims.constraint_dim)
    avg = RunningAverage(config.average_kind)
    avg.push(x, config.step(1))
    trace = RunTrace(meta={"problem": spec.name, "config": config.to_dict(),
                           "method": "centralized-pdp" if perturb else "centralized-pd"})
    for k in range(1, config.max_iters + 1):
        a_k = config.step(k)
        if perturb:
            x, lam = centralized_pdp_step(x, lam, spec, a_k, config.rho1, config.rho2,
                                          config.mode, config.d_lambda)
        else:
            x, lam = centralized_pd_step(x, lam, spec, a_k, config.d_lambda)
        a_next = config.step(k + 1) if (config.steps is None or k < len(config.steps)) else a_k
        x_avg = avg.push(x, a_next)
        trace.append(**trace_row(spec, objective, k, a_k, x, x_avg, lam))
    trace.meta["x_avg"] = avg.value.tolist()
    return x, lam, trace


def distributed_pd_run(spec, config, schedule, **kwargs):
    """Distributed primal-dual baseline: the PDP loop with perturbation switched off."""
    return run(spec, config, schedule, perturb=False, **kwargs)


# --------------------------------------------------------------------------
# distributed dual subgradient for demand-side management

def box_linear_minimizer(c, lower, upper):
    """``argmin_{l <= x <= u} c^T x``; ties (``c_t = 0``) resolve to the lower bound."""
    return np.where(c < 0, upper, lower)


def _polyhedral_linear_minimizer(c, local_set):
    """``argmin c^T x`` over a :class:`Polyhedron` by linear programming (HiGHS)."""
    from scipy.optimize import linprog

    lo, hi = local_set.bounding_box()
    if not np.any(c):
        return local_set(lo)
    res = linprog(c, A_ub=local_set.A, b_ub=local_set.b, bounds=list(zip(lo, hi)), method="highs")
    if res.status != 0:
        raise InnerSolveFailure(f"inner linear program failed: {res.message}")
    return np.clip(res.x, lo, hi)


def dds_run(instance, config, schedule, report_objective=None):
    """
    Distributed dual subgradient on the demand-side management problem.

    The network cost is dualized through two multipliers: ``lam`` for the
    excess of the aggregate load over the bid and ``eta`` for the shortfall.
    Each of the ``N + 1`` participants (the customers and the retailer, who
    holds no load) keeps a copy of ``(lam, eta)``; a round mixes the copies,
    solves every customer's linear inner problem over its local set, and
    takes a projected dual ascent step on the local dual function

        q_i = -|lam|^2/(4 pi_p n) - |eta|^2/(4 pi_s n) - (lam - eta)^T p / n
              + min_x (lam - eta)^T Psi_i x

    with ``n = N + 1``. The reported primal point is the running average of
    the inner minimizers.

    Parameters
    ----------
    instance : DsmInstance
    config : SolverConfig
        Uses ``step_a``, ``step_b`` (or ``steps``), ``max_iters`` and
        ``average_kind``.
    schedule : GraphSchedule
        Mixing over ``N + 1`` nodes.
    report_objective : callable, optional
        Maps stacked customer schedules ``(N, T)`` to the reported cost
        (default: the instance's scheduling cost).

    Returns
    -------
    x_avg : ndarray, shape (N, T)
    trace : RunTrace
    """
    N, T = instance.num_customers, instance.horizon
    n = N + 1
    if schedule.n != n:
        raise ValueError(f"schedule must have {n} nodes (customers plus retailer)")
    pi_p, pi_s, p = instance.price_p, instance.price_s, instance.bid
    objective = instance.cost if report_objective is None else report_objective
    duals = np.zeros((n, 2 * T))  # rows: [lam | eta]
    loads = np.zeros((n, T))
    avg = RunningAverage(config.average_kind)
    trace = RunTrace(meta={"problem": instance.name, "config": config.to_dict(), "method": "dds"})
    for k in range(1, config.max_iters + 1):
        a_k = config.step(k)
        mixed = mix(schedule.matrix(k), duals)
        lam, eta = mixed[:, :T], mixed[:, T:]
        xs = []
        for i in range(N):
            c = instance.loads[i].T @ (lam[i] - eta[i])
            s = instance.local_sets[i]
            xi = box_linear_minimizer(c, s.lower, s.upper) if isinstance(s, Box) \
                else _polyhedral_linear_minimizer(c, s)
            xs.append(xi)
            loads[i] = instance.loads[i] @ xi
        x = np.array(xs)
        loads[N] = 0.0
        grad_lam = -lam / (2 * pi_p * n) + loads - p / n
        grad_eta = -eta / (2 * pi_s * n) - loads + p / n
        duals = np.maximum(np.hstack((lam + a_k * grad_lam, eta + a_k * grad_eta)), 0.0)
        x_avg = avg.push(x, a_k)
        lam_bar = duals.mean(axis=0)
        # the retailer's slack absorbs any excess, so the coupling is never violated
        trace.append(k=k, a_k=a_k, obj_avg=float(objective(x_avg)), obj_raw=float(objective(x)),
                     viol=0.0, compl_slack=math.nan,
                     dual_disagree=float(np.max(np.linalg.norm(duals - lam_bar, axis=1))),
                     y_disagree=0.0, z_disagree=0.0)
    trace.meta["x_avg"] = avg.value.tolist()
    return avg.value, trace
