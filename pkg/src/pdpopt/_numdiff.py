import numpy as np


def central_jacobian(fun, x, h=1e-6):
    """Central-difference Jacobian of ``fun`` at ``x``; scalar outputs give a 1-d gradient."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x), dtype=float)
    jac = np.empty(f0.shape + x.shape)
    for j in range(x.size):
        step = np.zeros_like(x)
        step[j] = h
        jac[..., j] = (np.asarray(fun(x + step)) - np.asarray(fun(x - step))) / (2.0 * h)
    return jac


def relative_error(approx, exact):
    """``||approx - exact|| / max(1, ||exact||)`` in the Frobenius norm."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    return float(np.linalg.norm(approx - exact) / max(1.0, np.linalg.norm(exact)))
