"""
Communication graphs: Metropolis weights, time-varying schedules of mixing
matrices, validation of the connectivity/stochasticity assumptions, and the
averaging step agents use to combine their neighbours' messages.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import AsymmetricAdjacency, DimensionMismatch

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True)
class WeightMatrix:
    """
    A doubly stochastic mixing matrix.

    ``self_weight_floor`` is the realized floor: the smallest positive entry.
    """

    entries: np.ndarray
    self_weight_floor: float = field(init=False)

    def __post_init__(self):
        W = np.array(self.entries, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise DimensionMismatch("weight matrix must be square")
        W.setflags(write=False)
        object.__setattr__(self, "entries", W)
        object.__setattr__(self, "self_weight_floor", float(W[W > 0].min()) if np.any(W > 0) else 0.0)

    @property
    def n(self):
        return self.entries.shape[0]

    def stochasticity_residual(self):
        W = self.entries
        return float(max(np.max(np.abs(W.sum(axis=1) - 1.0)), np.max(np.abs(W.sum(axis=0) - 1.0))))

    def edges(self):
        """Boolean matrix of links ``(i, j)`` with ``i != j`` and positive weight."""
        E = self.entries > 0
        np.fill_diagonal(E, False)
        return E


def _as_adjacency(adjacency):
    A = np.asarray(adjacency)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch("adjacency must be square")
    A = A.astype(bool)
    if not np.array_equal(A, A.T):
        raise AsymmetricAdjacency("Metropolis weights need an undirected (symmetric) adjacency")
    if np.any(np.diag(A)):
        raise ValueError("adjacency must have a zero diagonal")
    return A


def metropolis_weights(adjacency):
    """
    Metropolis weights ``W_ij = 1 / (1 + max(d_i, d_j))`` on edges, with the
    remaining mass on the diagonal. Doubly stochastic for undirected graphs.
    """
    A = _as_adjacency(adjacency)
    deg = A.sum(axis=1)
    W = np.where(A, 1.0 / (1.0 + np.maximum.outer(deg, deg)), 0.0)
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return WeightMatrix(W)


def mix(W, values):
    """
    One averaging round: row ``i`` of the result is ``sum_j W_ij values_j``.

    Terms are accumulated in agent-index order so the result does not depend
    on how the caller distributes work.
    """
    W = W.entries if isinstance(W, WeightMatrix) else np.asarray(W, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
        squeeze = True
    else:
        squeeze = False
    if values.shape[0] != W.shape[0]:
        raise DimensionMismatch(f"{values.shape[0]} value rows for {W.shape[0]} agents")
    out = W[:, 0, None] * values[0]
    for j in range(1, W.shape[0]):
        out = out + W[:, j, None] * values[j]
    return out[:, 0] if squeeze else out


# --------------------------------------------------------------------------
# topologies

def ring_graph(n):
    A = np.zeros((n, n), dtype=bool)
    if n > 1:
        idx = np.arange(n)
        A[idx, (idx + 1) % n] = True
        A[(idx + 1) % n, idx] = True
    np.fill_diagonal(A, False)
    return A


def path_graph(n):
    A = np.zeros((n, n), dtype=bool)
    idx = np.arange(n - 1)
    A[idx, idx + 1] = True
    A[idx + 1, idx] = True
    return A


def complete_graph(n):
    A = np.ones((n, n), dtype=bool)
    np.fill_diagonal(A, False)
    return A


def is_strongly_connected(edges):
    """Depth-first search from node 0 along edges and along reversed edges."""
    E = np.asarray(edges, dtype=bool)
    n = E.shape[0]
    if n <= 1:
        return True

    def reach(adj):
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(adj[u] & ~seen):
                seen[v] = True
                stack.append(v)
        return seen.all()

    return reach(E) and reach(E.T)


def random_geometric_graph(n, radius=None, seed=0):
    """
    Nodes uniform in the unit square, linked when closer than ``radius``.

    The radius defaults to ``sqrt(2 log(n) / n)``; it is grown by 10% until
    the graph is connected so the result is always usable.
    """
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    r = np.sqrt(2.0 * np.log(max(n, 2)) / n) if radius is None else float(radius)
    while True:
        A = dist < r
        np.fill_diagonal(A, False)
        if is_strongly_connected(A):
            return A
        r *= 1.1


def erdos_renyi_graph(n, prob, seed=0, max_tries=1000):
    """A connected G(n, p) sample (resampled until connected)."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        U = np.triu(rng.random((n, n)) < prob, 1)
        A = U | U.T
        if is_strongly_connected(A):
            return A
    raise ValueError(f"no connected G({n}, {prob}) sample in {max_tries} tries")


# --------------------------------------------------------------------------
# schedules

class GraphSchedule:
    """Base class; ``matrix(k)`` gives the mixing matrix used in round ``k >= 1``."""

    connectivity_window = 1

    def matrix(self, k):
        raise NotImplementedError

    @property
    def n(self):
        return self.matrix(1).n

    def to_dict(self):
        raise NotImplementedError


class StaticSchedule(GraphSchedule):
    def __init__(self, W, connectivity_window=1, adjacency=None):
        self.W = W if isinstance(W, WeightMatrix) else WeightMatrix(W)
        self.connectivity_window = int(connectivity_window)
        self.adjacency = None if adjacency is None else np.asarray(adjacency, dtype=bool)

    @classmethod
    def from_adjacency(cls, adjacency, connectivity_window=1):
        return cls(metropolis_weights(adjacency), connectivity_window, adjacency)

    def matrix(self, k):
        return self.W

    def to_dict(self):
        if self.adjacency is not None:
            return {"kind": "static", "adjacency": self.adjacency.astype(int).tolist(),
                    "Q": self.connectivity_window}
        return {"kind": "static", "weights": self.W.entries.tolist(), "Q": self.connectivity_window}


class PeriodicSchedule(GraphSchedule):
    """Cycles through a fixed list of matrices: round ``k`` uses ``matrices[(k-1) % len]``."""

    def __init__(self, matrices, connectivity_window=None):
        self.matrices = [m if isinstance(m, WeightMatrix) else WeightMatrix(m) for m in matrices]
        self.connectivity_window = len(self.matrices) if connectivity_window is None else int(connectivity_window)

    def matrix(self, k):
        return self.matrices[(k - 1) % len(self.matrices)]

    def to_dict(self):
        return {"kind": "periodic", "weights": [m.entries.tolist() for m in self.matrices],
                "Q": self.connectivity_window}


class CyclicEdgeSchedule(PeriodicSchedule):
    """
    Splits the edges of a connected base graph into ``Q`` groups and activates
    one group per round, so every window of ``Q`` rounds covers the base graph.
    """

    def __init__(self, adjacency, groups, seed=0):
        A = _as_adjacency(adjacency)
        self.adjacency, self.groups, self.seed = A, int(groups), int(seed)
        iu, ju = np.nonzero(np.triu(A, 1))
        order = np.random.default_rng(seed).permutation(iu.size)
        mats = []
        for g in range(self.groups):
            sel = order[g::self.groups]
            B = np.zeros_like(A)
            B[iu[sel], ju[sel]] = True
            B[ju[sel], iu[sel]] = True
            mats.append(metropolis_weights(B))
        super().__init__(mats, self.groups)

    def to_dict(self):
        return {"kind": "cyclic", "adjacency": self.adjacency.astype(int).tolist(),
                "Q": self.groups, "seed": self.seed}


class RandomEdgeSchedule(GraphSchedule):
    """
    Each round keeps every edge of the base graph independently with
    probability ``edge_prob`` and uses Metropolis weights on the result.

    The matrix for round ``k`` is drawn from a generator seeded with
    ``(seed, k)``, so any round can be regenerated independently.
    """

    def __init__(self, adjacency, edge_prob, seed=0, connectivity_window=10):
        self.adjacency = _as_adjacency(adjacency)
        self.edge_prob = float(edge_prob)
        self.seed = int(seed)
        self.connectivity_window = int(connectivity_window)
        self._cache = {}

    def matrix(self, k):
        W = self._cache.get(k)
        if W is None:
            rng = np.random.default_rng([self.seed, k])
            keep = np.triu(rng.random(self.adjacency.shape) < self.edge_prob, 1)
            keep = keep | keep.T
            W = metropolis_weights(self.adjacency & keep)
            if len(self._cache) < 4096:
                self._cache[k] = W
        return W

    def to_dict(self):
        return {"kind": "random", "adjacency": self.adjacency.astype(int).tolist(),
                "edge_prob": self.edge_prob, "seed": self.seed, "Q": self.connectivity_window}


def schedule_from_dict(doc):
    kind = doc["kind"]
    q = doc.get("Q")
    if kind == "static":
        if "adjacency" in doc:
            return StaticSchedule.from_adjacency(np.array(doc["adjacency"], dtype=bool), q or 1)
        return StaticSchedule(np.array(doc["weights"]), q or 1)
    if kind == "periodic":
        return PeriodicSchedule([np.array(w) for w in doc["weights"]], q)
    if kind == "cyclic":
        return CyclicEdgeSchedule(np.array(doc["adjacency"], dtype=bool), q, doc.get("seed", 0))
    if kind == "random":
        return RandomEdgeSchedule(np.array(doc["adjacency"], dtype=bool), doc["edge_prob"],
                                  doc.get("seed", 0), q or 10)
    raise ValueError(f"unknown schedule kind {kind!r}")


# --------------------------------------------------------------------------
# validation

@dataclass
class CheckReport:
    horizon: int
    connectivity_window: int
    weight_floor: float
    stochasticity_residual: float
    nonnegative: bool
    first_disconnected_window: object = None

    @property
    def floor_ok(self):
        return self.weight_floor > 0

    @property
    def stochastic_ok(self):
        return self.nonnegative and self.stochasticity_residual < STOCHASTIC_TOL

    @property
    def connectivity_ok(self):
        return self.first_disconnected_window is None

    @property
    def ok(self):
        return self.floor_ok and self.stochastic_ok and self.connectivity_ok

    def to_dict(self):
        return {
            "ok": self.ok,
            "horizon": self.horizon,
            "Q": self.connectivity_window,
            "weight_floor": self.weight_floor,
            "stochasticity_residual": self.stochasticity_residual,
            "nonnegative": self.nonnegative,
            "first_disconnected_window": self.first_disconnected_window,
        }

    def __str__(self):
        def tag(ok):
            return "PASS" if ok else "FAIL"
        conn = ("every window strongly connected" if self.connectivity_ok
                else f"window starting at round offset {self.first_disconnected_window} is not strongly connected")
        return "\n".join([
            f"[{tag(self.floor_ok)}] (a) positive-entry floor eta = {self.weight_floor:.6g}",
            f"[{tag(self.stochastic_ok)}] (b) doubly stochastic, residual {self.stochasticity_residual:.2e}",
            f"[{tag(self.connectivity_ok)}] (c) Q={self.connectivity_window}: {conn}",
        ])


def check_assumption4(schedule, horizon, connectivity_window=None):
    """
    Check rounds ``1..horizon`` of a schedule: entry floor, double
    stochasticity, and strong connectivity of the union graph over every
    window of ``Q`` consecutive rounds. Windows are reported by offset
    ``s`` (covering rounds ``s+1 .. s+Q``).
    """
    Q = int(connectivity_window or schedule.connectivity_window)
    if horizon < Q:
        raise ValueError("horizon must be at least the connectivity window")
    floor, resid, nonneg = np.inf, 0.0, True
    edges = []
    for k in range(1, horizon + 1):
        W = schedule.matrix(k)
        E = W.entries
        nonneg = nonneg and bool(np.all(E >= 0))
        floor = min(floor, W.self_weight_floor, float(np.min(np.diag(E))))
        resid = max(resid, W.stochasticity_residual())
        edges.append(W.edges())
    first_bad = None
    for s in range(horizon - Q + 1):
        union = np.zeros_like(edges[0])
        for E in edges[s:s + Q]:
            union |= E
        if not is_strongly_connected(union):
            first_bad = s
            break
    return CheckReport(horizon, Q, float(floor), float(resid), nonneg, first_bad)
