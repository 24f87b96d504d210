"""
Distributed consensus-based primal-dual perturbation (PDP) iteration.

Every round runs, in this order and for every agent ``i``:

1. averaging consensus on ``(y_i, z_i, lambda_i)`` with the round's mixing
   matrix, giving the snapshots ``tilde_y``, ``tilde_z``, ``tilde_lambda``;
2. perturbation points ``(alpha_i, beta_i)`` from one projected gradient step
   (smooth constraints) or one proximal-gradient step (non-smooth ones);
3. the perturbed primal-dual update of ``(x_i, lambda_i)``;
4. the tracking update of ``y_i`` and ``z_i`` with the change in
   ``f_i(x_i)`` and ``g_i(x_i)``.

Steps 2-4 only touch agent-local data, so they may run on a thread pool;
results are identical for any number of workers.
"""

import csv
import enum
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigWarning, DimensionMismatch, EmptyHistory, ModeMismatch, ProxFailure
from .network import mix
from .problem import PerturbationMode, project_dual_ball


class AverageKind(str, enum.Enum):
    WEIGHTED = "weighted"
    UNIFORM = "uniform"


@dataclass
class SolverConfig:
    """
    Parameters of one run.

    The step in round ``k`` is ``step_a / (step_b + k)`` unless an explicit
    ``steps`` list is given. ``d_lambda=None`` uses the radius derived from
    the problem's Slater certificate; ``mode=None`` uses the problem's own
    perturbation mode.
    """

    step_a: float = 1.0
    step_b: float = 10.0
    rho1: float = 1e-3
    rho2: float = 1e-3
    d_lambda: Optional[float] = None
    mode: Optional[PerturbationMode] = None
    max_iters: int = 1000
    average_kind: AverageKind = AverageKind.WEIGHTED
    record_centralized_diagnostics: bool = False
    rng_seed: int = 0
    steps: Optional[Sequence[float]] = None
    early_stop_tol: Optional[float] = None

    def __post_init__(self):
        self.average_kind = AverageKind(self.average_kind)
        if self.mode is not None:
            self.mode = PerturbationMode(self.mode)
        if self.rho1 < 0 or self.rho2 < 0:
            raise ValueError("rho1 and rho2 must be non-negative")
        if self.steps is None:
            if self.step_a <= 0 or self.step_b < 0:
                raise ValueError("step schedule a/(b+k) needs a > 0 and b >= 0")
        else:
            steps = np.asarray(self.steps, dtype=float)
            if steps.size < self.max_iters:
                raise ValueError("explicit step list shorter than max_iters")
            if np.any(steps <= 0) or np.any(np.diff(steps) > 0):
                raise ValueError("explicit steps must be positive and non-increasing")

    def step(self, k):
        if self.steps is not None:
            return float(self.steps[k - 1])
        return self.step_a / (self.step_b + k)

    def resolve(self, spec):
        """Return a copy with ``d_lambda`` and ``mode`` filled in from ``spec``."""
        d = self.d_lambda if self.d_lambda is not None else spec.d_lambda
        mode = self.mode if self.mode is not None else spec.mode
        return SolverConfig(**{**self.__dict__, "d_lambda": d, "mode": mode})

    def to_dict(self):
        out = dict(self.__dict__)
        out["average_kind"] = self.average_kind.value
        out["mode"] = None if self.mode is None else self.mode.value
        if self.steps is not None:
            out["steps"] = [float(s) for s in self.steps]
        return out


def theorem_warnings(spec, config):
    """Messages for every theorem condition ``config`` violates (empty when compliant)."""
    cfg = config.resolve(spec)
    bound = spec.theorem_rho1_bound(cfg.d_lambda) if cfg.mode is PerturbationMode.GRADIENT \
        else (1.0 / spec.global_grad_lipschitz if spec.global_grad_lipschitz > 0 else math.inf)
    out = []
    if cfg.rho1 > bound:
        out.append(f"rho1={cfg.rho1:g} exceeds the convergence bound {bound:.6g} for {cfg.mode.value} perturbation")
    return out


@dataclass
class AgentState:
    """One agent's iterates and the values it received or derived this round."""

    index: int
    x: np.ndarray
    lam: np.ndarray
    y: np.ndarray
    z: np.ndarray
    tilde_y: Optional[np.ndarray] = None
    tilde_z: Optional[np.ndarray] = None
    tilde_lambda: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    x_prev: Optional[np.ndarray] = None
    # f_i(x), g_i(x) and this round's cost direction, cached between steps
    fx: Optional[np.ndarray] = field(default=None, repr=False)
    gx: Optional[np.ndarray] = field(default=None, repr=False)
    cost_dir: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self):
        return {"index": self.index, "x": self.x.tolist(), "lambda": self.lam.tolist(),
                "y": self.y.tolist(), "z": self.z.tolist()}


def init_states(spec, config, initial_x=None):
    """
    Algorithm start: ``x_i`` projected into ``X_i`` (default ``P_X(0)``),
    ``lambda_i = 0``, ``y_i = f_i(x_i)``, ``z_i = g_i(x_i)``.
    """
    d = spec.dims
    if initial_x is None:
        initial_x = np.zeros((d.num_agents, d.primal_dim))
    initial_x = np.asarray(initial_x, dtype=float)
    if initial_x.shape != (d.num_agents, d.primal_dim):
        raise DimensionMismatch(f"initial_x has shape {initial_x.shape}, expected {(d.num_agents, d.primal_dim)}")
    states = []
    for i, agent in enumerate(spec.agents):
        x = np.asarray(agent.project(initial_x[i]), dtype=float)
        fx, gx = np.asarray(agent.map(x), dtype=float), np.asarray(agent.constraint(x), dtype=float)
        states.append(AgentState(i, x, np.zeros(d.constraint_dim), fx.copy(), gx.copy(), fx=fx, gx=gx))
    return states


def consensus_round(states, W):
    """Set ``tilde_y``, ``tilde_z``, ``tilde_lambda`` by mixing the previous round's values."""
    m = states[0].y.size
    p = states[0].z.size
    packed = np.array([np.concatenate((s.y, s.z, s.lam)) for s in states])
    mixed = mix(W, packed)
    for s, row in zip(states, mixed):
        s.tilde_y = row[:m]
        s.tilde_z = row[m:m + p]
        s.tilde_lambda = row[m + p:]
    return states


def _cost_direction(state, spec):
    """``J_fi(x_i)^T grad F(N tilde_y_i)``: the agent's estimate of its cost gradient."""
    if state.cost_dir is None:
        agent = spec.agents[state.index]
        state.cost_dir = agent.map_jacobian(state.x).T @ spec.cost.grad(spec.num_agents * state.tilde_y)
    return state.cost_dir


def _dual_perturbation(state, spec, config):
    return project_dual_ball(state.tilde_lambda + config.rho2 * spec.num_agents * state.tilde_z,
                             config.d_lambda)


def gradient_perturbation(state, spec, config):
    """Perturbation points from one projected gradient step on each side."""
    agent = spec.agents[state.index]
    if agent.constraint_jacobian is None:
        raise ModeMismatch("gradient perturbation needs the constraint Jacobian")
    direction = _cost_direction(state, spec) + agent.constraint_jacobian(state.x).T @ state.tilde_lambda
    state.alpha = agent.project(state.x - config.rho1 * direction)
    state.beta = _dual_perturbation(state, spec, config)
    return state.alpha, state.beta


def proximal_perturbation(state, spec, config):
    """Primal perturbation point from the constraint prox; the dual point as in gradient mode."""
    agent = spec.agents[state.index]
    if agent.constraint_prox is None:
        raise ModeMismatch("proximal perturbation needs a constraint prox callback")
    v = state.x - config.rho1 * _cost_direction(state, spec)
    alpha = np.asarray(agent.constraint_prox(v, state.tilde_lambda, config.rho1), dtype=float)
    if alpha.shape != state.x.shape or not np.all(np.isfinite(alpha)):
        raise ProxFailure(f"agent {state.index}: prox returned an invalid point")
    state.alpha = alpha
    state.beta = _dual_perturbation(state, spec, config)
    return state.alpha


def no_perturbation(state, spec, config):
    """Unperturbed baseline: ``alpha_i = x_i``, ``beta_i = tilde_lambda_i``."""
    state.alpha = state.x
    state.beta = state.tilde_lambda
    return state.alpha, state.beta


def primal_dual_update(state, spec, config, a_k):
    agent = spec.agents[state.index]
    direction = _cost_direction(state, spec) + agent.constraint_slope(state.x).T @ state.beta
    state.x_prev = state.x
    state.x = agent.project(state.x - a_k * direction)
    if state.alpha is state.x_prev and state.gx is not None:
        g_alpha = state.gx
    else:
        g_alpha = agent.constraint(state.alpha)
    state.lam = project_dual_ball(state.tilde_lambda + a_k * g_alpha, config.d_lambda)
    state.cost_dir = None
    return state


def auxiliary_update(state, spec):
    """Add the change of ``f_i(x_i)``, ``g_i(x_i)`` to the mixed estimates."""
    agent = spec.agents[state.index]
    fx, gx = agent.map(state.x), agent.constraint(state.x)
    f_prev = state.fx if state.fx is not None else agent.map(state.x_prev)
    g_prev = state.gx if state.gx is not None else agent.constraint(state.x_prev)
    state.y = state.tilde_y + fx - f_prev
    state.z = state.tilde_z + gx - g_prev
    state.fx, state.gx = fx, gx
    return state


# --------------------------------------------------------------------------
# running averages

class RunningAverage:
    """
    Incremental running average of the primal iterates.

    ``WEIGHTED`` keeps ``sum_l a_l x^(l-1) / sum_l a_l``; ``UNIFORM`` keeps the
    plain mean, valid for steps of the form ``a/(b+k)``.
    """

    def __init__(self, kind=AverageKind.WEIGHTED):
        self.kind = AverageKind(kind)
        self.value = None
        self.total = 0.0
        self.count = 0

    def push(self, x, weight):
        x = np.asarray(x, dtype=float)
        self.count += 1
        if self.kind is AverageKind.UNIFORM:
            w = 1.0 / self.count
        else:
            self.total += weight
            w = weight / self.total
        self.value = x.copy() if self.value is None else (1.0 - w) * self.value + w * x
        return self.value


def running_average(history, steps=None, kind=AverageKind.WEIGHTED):
    """
    Batch running average of ``history = [x^(0), ..., x^(k-1)]``.

    Weighted: ``(1/A_k) sum_{l=1..k} a_l x^(l-1)`` with ``steps = [a_1..a_k]``.
    Uniform: ``(1/k) sum_l x^(l)``.
    """
    if len(history) == 0:
        raise EmptyHistory("running average of an empty history")
    X = np.asarray(history, dtype=float)
    if AverageKind(kind) is AverageKind.UNIFORM:
        return X.mean(axis=0)
    a = np.asarray(steps, dtype=float)[:len(X)]
    return np.tensordot(a, X, axes=1) / a.sum()


# --------------------------------------------------------------------------
# trace

TRACE_COLUMNS = ("k", "a_k", "obj_avg", "obj_raw", "viol", "compl_slack",
                 "dual_disagree", "y_disagree", "z_disagree", "pert_residual")


class RunTrace:
    """Per-iteration metrics; one row per round in increasing ``k``."""

    def __init__(self, meta=None):
        self.rows = []
        self.meta = dict(meta or {})

    def append(self, **row):
        if self.rows and row["k"] <= self.rows[-1]["k"]:
            raise ValueError("trace rows must have increasing k")
        self.rows.append({c: row.get(c, math.nan) for c in TRACE_COLUMNS})

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, idx):
        return self.rows[idx]

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def at(self, k):
        for r in self.rows:
            if r["k"] == k:
                return r
        raise KeyError(k)

    def to_csv(self, target=None):
        """Write CSV (``repr`` float formatting, so reruns are byte-identical); returns the text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.rows:
            w.writerow([int(r["k"])] + [repr(float(r[c])) for c in TRACE_COLUMNS[1:]])
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        trace = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                trace.rows.append({c: (int(row[c]) if c == "k" else float(row[c])) for c in TRACE_COLUMNS})
        return trace

    def to_dict(self):
        return {"meta": self.meta, "columns": list(TRACE_COLUMNS),
                "rows": [[r[c] for c in TRACE_COLUMNS] for r in self.rows]}

    def to_json(self, target=None):
        text = json.dumps(self.to_dict(), allow_nan=True)
        if target is not None:
            with open(target, "w") as fh:
                fh.write(text)
        return text


def states_to_json(states):
    return json.dumps([s.to_dict() for s in states])


def _max_disagreement(rows):
    dev = rows - rows.sum(axis=0) / rows.shape[0]
    return math.sqrt(float((dev * dev).sum(axis=1).max()))


def trace_row(spec, objective, k, a_k, x, x_avg, lam, y=None, z=None, pert_residual=math.nan):
    """
    Metrics for one round. ``lam``, ``y``, ``z`` hold one row per agent
    (a single row for centralized methods, giving zero disagreement).
    """
    gsum = spec.constraint_sum(x_avg)
    lam = np.atleast_2d(lam)
    return dict(
        k=k, a_k=a_k,
        obj_avg=float(objective(x_avg)), obj_raw=float(objective(x)),
        viol=float(np.linalg.norm(np.maximum(gsum, 0.0))),
        compl_slack=abs(float(lam.sum(axis=0) / lam.shape[0] @ gsum)),
        dual_disagree=_max_disagreement(lam),
        y_disagree=0.0 if y is None else _max_disagreement(y),
        z_disagree=0.0 if z is None else _max_disagreement(z),
        pert_residual=pert_residual,
    )


# --------------------------------------------------------------------------
# diagnostics with a global view

@dataclass
class DiagnosticRecord:
    residual: float
    lhs: float
    primal_gap: float
    dual_gap: float


def centralized_perturbation_points(spec, config, x, lam_hat, y_hat, z_hat):
    """
    Perturbation points computed from network-wide averages (``lam_hat``,
    ``y_hat``, ``z_hat``) rather than each agent's mixed estimates.
    """
    n = spec.num_agents
    gF = spec.cost.grad(n * y_hat)
    alpha = np.empty_like(x)
    for i, agent in enumerate(spec.agents):
        d = agent.map_jacobian(x[i]).T @ gF
        if config.mode is PerturbationMode.PROXIMAL:
            alpha[i] = agent.constraint_prox(x[i] - config.rho1 * d, lam_hat, config.rho1)
        else:
            alpha[i] = agent.project(x[i] - config.rho1 * (d + agent.constraint_jacobian(x[i]).T @ lam_hat))
    beta = project_dual_ball(lam_hat + config.rho2 * n * z_hat, config.d_lambda)
    return alpha, beta


def centralized_diagnostics(states, spec, config):
    """
    Residual of the perturbation inequality at the current iterates::

        L(x, beta_hat) - L(alpha_hat, lam_hat)
            - c ||x - alpha_hat||^2 - (1/rho2) ||lam_hat - beta_hat||^2

    with ``c = 1/rho1 - (G_Fbar + D_lambda sqrt(P) G_g)`` for gradient
    perturbation and ``c = 1/(2 rho1) - G_Fbar/2`` for proximal perturbation.
    Non-negative whenever ``rho1`` respects its bound.
    """
    config = config.resolve(spec) if config.d_lambda is None or config.mode is None else config
    x = np.array([s.x for s in states])
    lam_hat = np.mean([s.lam for s in states], axis=0)
    y_hat = np.mean([s.y for s in states], axis=0)
    z_hat = np.mean([s.z for s in states], axis=0)
    alpha, beta = centralized_perturbation_points(spec, config, x, lam_hat, y_hat, z_hat)
    lhs = spec.lagrangian(x, beta) - spec.lagrangian(alpha, lam_hat)
    primal_gap = float(np.sum((x - alpha) ** 2))
    dual_gap = float(np.sum((lam_hat - beta) ** 2))
    if config.mode is PerturbationMode.PROXIMAL:
        c = 0.5 / config.rho1 - 0.5 * spec.global_grad_lipschitz
    else:
        g_g = max(a.lipschitz_constraint_grad for a in spec.agents)
        c = 1.0 / config.rho1 - (spec.global_grad_lipschitz
                                 + config.d_lambda * math.sqrt(spec.dims.constraint_dim) * g_g)
    dual_term = dual_gap / config.rho2 if dual_gap > 0 else 0.0
    return DiagnosticRecord(lhs - c * primal_gap - dual_term, lhs, primal_gap, dual_gap)


# --------------------------------------------------------------------------
# driver

def _agent_round(state, spec, config, a_k, perturb):
    if not perturb:
        no_perturbation(state, spec, config)
    elif config.mode is PerturbationMode.PROXIMAL:
        proximal_perturbation(state, spec, config)
    else:
        gradient_perturbation(state, spec, config)
    primal_dual_update(state, spec, config, a_k)
    auxiliary_update(state, spec)
    return state


def run(spec, config, schedule, callbacks=(), initial_x=None, report_objective=None,
        perturb=True, workers=1):
    """
    Run the distributed PDP iteration for ``config.max_iters`` rounds.

    Parameters
    ----------
    spec : ProblemSpec
    config : SolverConfig
    schedule : GraphSchedule
        Mixing matrix per round.
    callbacks : sequence of callables
        Each is called as ``cb(k, states, row)`` after round ``k``.
    initial_x : ndarray, optional
        Starting primal point, shape ``(N, K)``; projected onto the local sets.
    report_objective : callable, optional
        Maps a stacked primal point to the objective reported in the trace
        (defaults to the problem's network cost).
    perturb : bool
        ``False`` gives the unperturbed primal-dual baseline.
    workers : int
        Threads used for the per-agent steps.

    Returns
    -------
    states : list of AgentState
    trace : RunTrace
    """
    config = config.resolve(spec)
    if perturb:
        for msg in theorem_warnings(spec, config):
            warnings.warn(msg, ConfigWarning, stacklevel=2)
        if config.mode is PerturbationMode.GRADIENT and any(a.constraint_jacobian is None for a in spec.agents):
            raise ModeMismatch("gradient perturbation requested but some constraints are non-smooth")
        if config.mode is PerturbationMode.PROXIMAL and any(a.constraint_prox is None for a in spec.agents):
            raise ModeMismatch("proximal perturbation requested but some agents lack a prox")
    if schedule.n != spec.num_agents:
        raise DimensionMismatch(f"schedule has {schedule.n} nodes for {spec.num_agents} agents")
    objective = spec.objective if report_objective is None else report_objective
    states = init_states(spec, config, initial_x)
    avg = RunningAverage(config.average_kind)
    avg.push(np.array([s.x for s in states]), config.step(1))
    trace = RunTrace(meta={"problem": spec.name, "config": config.to_dict(), "perturb": perturb})

    pool = ThreadPoolExecutor(max_workers=workers) if workers and workers > 1 else None
    try:
        for k in range(1, config.max_iters + 1):
            a_k = config.step(k)
            diag = None
            if config.record_centralized_diagnostics and perturb:
                diag = centralized_diagnostics(states, spec, config)
            consensus_round(states, schedule.matrix(k))
            if pool is None:
                for s in states:
                    _agent_round(s, spec, config, a_k, perturb)
            else:
                list(pool.map(lambda s: _agent_round(s, spec, config, a_k, perturb), states))

            x = np.array([s.x for s in states])
            a_next = config.step(k + 1) if (config.steps is None or k < len(config.steps)) else a_k
            x_avg = avg.push(x, a_next)
            row = trace_row(spec, objective, k, a_k, x, x_avg,
                            np.array([s.lam for s in states]),
                            np.array([s.y for s in states]), np.array([s.z for s in states]),
                            math.nan if diag is None else diag.residual)
            trace.append(**row)
            for cb in callbacks:
                cb(k, states, row)
            if (config.early_stop_tol is not None and row["viol"] < config.early_stop_tol
                    and row["dual_disagree"] < config.early_stop_tol):
                break
    finally:
        if pool is not None:
            pool.shutdown()
    trace.meta["x_avg"] = avg.value.tolist()
    return states, trace
