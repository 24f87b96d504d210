"""
Euclidean projections onto the simple convex sets used as local constraint sets.

Every projector is a small callable object. Besides ``__call__`` it exposes
``diameter_bound`` (a radius ``D`` with ``||x|| <= D`` for every point of the
set, or ``inf``), ``contains`` and ``to_dict`` so that built-in problem
families can be written to JSON.
"""

import numpy as np


class Box:
    """The box ``{x : lower <= x <= upper}``."""

    kind = "box"

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if np.any(self.lower > self.upper):
            raise ValueError("empty box: lower > upper somewhere")

    @property
    def dim(self):
        return self.lower.size

    def __call__(self, v):
        return np.minimum(np.maximum(v, self.lower), self.upper)

    def contains(self, x, tol=0.0):
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    @property
    def diameter_bound(self):
        return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))

    def bounding_box(self):
        return self.lower, self.upper

    def to_dict(self):
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class Ball:
    """The Euclidean ball of given radius around ``center``."""

    kind = "ball"

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self):
        return self.center.size

    def __call__(self, v):
        d = v - self.center
        nrm = np.linalg.norm(d)
        if nrm <= self.radius:
            return np.array(v, dtype=float)
        return self.center + d * (self.radius / nrm)

    def contains(self, x, tol=0.0):
        return bool(np.linalg.norm(x - self.center) <= self.radius + tol)

    @property
    def diameter_bound(self):
        return float(np.linalg.norm(self.center) + self.radius)

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


class NonnegativeOrthant:
    kind = "orthant"

    def __init__(self, dim):
        self._dim = int(dim)

    @property
    def dim(self):
        return self._dim

    def __call__(self, v):
        return np.maximum(v, 0.0)

    def contains(self, x, tol=0.0):
        return bool(np.all(x >= -tol))

    diameter_bound = float("inf")

    def bounding_box(self):
        return np.zeros(self._dim), np.full(self._dim, np.inf)

    def to_dict(self):
        return {"kind": "orthant", "dim": self._dim}


def _project_halfspace(v, a, b, a_sq):
    viol = a @ v - b
    if viol <= 0.0:
        return v
    return v - (viol / a_sq) * a


class Polyhedron:
    """
    The polyhedron ``{x : A x <= b, lower <= x <= upper}``.

    Projection uses Dykstra's alternating projections over the box and each
    halfspace. Points that already lie in the set are returned unchanged.

    Parameters
    ----------
    A : ndarray, shape (m, n)
    b : ndarray, shape (m,)
    lower, upper : ndarray, shape (n,)
    tol : float
        Stop when one full sweep moves the iterate and every correction
        vector by less than ``tol``.
    max_sweeps : int
    """

    kind = "polyhedron"

    def __init__(self, A, b, lower, upper, tol=1e-10, max_sweeps=10_000):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float).reshape(-1)
        self.box = Box(lower, upper)
        if self.A.shape != (self.b.size, self.box.dim):
            raise ValueError("A must have shape (len(b), len(lower))")
        self.tol = float(tol)
        self.max_sweeps = int(max_sweeps)
        self._row_sq = np.einsum("ij,ij->i", self.A, self.A)
        if np.any(self._row_sq == 0):
            raise ValueError("A has a zero row")

    @property
    def dim(self):
        return self.box.dim

    def contains(self, x, tol=0.0):
        return self.box.contains(x, tol) and bool(np.all(self.A @ x <= self.b + tol))

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.contains(v):
            return v.copy()
        m = self.b.size
        x = v.copy()
        # one correction vector per set (box first, then halfspaces)
        incs = np.zeros((m + 1, x.size))
        for _ in range(self.max_sweeps):
            x_start, incs_start = x, incs.copy()
            y = self.box(x + incs[0])
            incs[0] = x + incs[0] - y
            x = y
            for j in range(m):
                y = _project_halfspace(x + incs[j + 1], self.A[j], self.b[j], self._row_sq[j])
                incs[j + 1] = x + incs[j + 1] - y
                x = y
            # x can stall for a few sweeps while the corrections still move
            if np.linalg.norm(x - x_start) < self.tol and np.linalg.norm(incs - incs_start) < self.tol:
                break
        # the last set visited is a halfspace; finish inside the box
        return self.box(x)

    @property
    def diameter_bound(self):
        return self.box.diameter_bound

    def bounding_box(self):
        return self.box.bounding_box()

    def to_dict(self):
        return {
            "kind": "polyhedron",
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "lower": self.box.lower.tolist(),
            "upper": self.box.upper.tolist(),
        }


def set_from_dict(doc):
    kind = doc["kind"]
    if kind == "box":
        return Box(doc["lower"], doc["upper"])
    if kind == "ball":
        return Ball(doc["center"], doc["radius"])
    if kind == "orthant":
        return NonnegativeOrthant(doc["dim"])
    if kind == "polyhedron":
        return Polyhedron(doc["A"], doc["b"], doc["lower"], doc["upper"])
    raise ValueError(f"unknown set kind {kind!r}")
