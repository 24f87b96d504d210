import numpy as np
import pytest

from pdpopt.families import AffineConstraint, LinearMap, QuadraticCost, build_problem
from pdpopt.projections import Box


def scalar_problem(n=1, H=2.0, h=0.0, c=0.0, lo=-2.0, hi=2.0, shift=1.0, slater=0.0, **kw):
    """N scalar agents with f_i(x) = x, g_i(x) = x - shift and F(u) = H/2 u^2 + h u + c."""
    return build_problem(
        QuadraticCost([[H]], [h], c),
        [LinearMap([[1.0]]) for _ in range(n)],
        [AffineConstraint([[1.0]], [shift]) for _ in range(n)],
        [Box([lo], [hi]) for _ in range(n)],
        [np.array([slater]) for _ in range(n)],
        **kw,
    )


@pytest.fixture
def scalar():
    return scalar_problem


# --- acceptance report ----------------------------------------------------

ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def acceptance():
    """``acceptance(n, ok, detail)`` stores one PASS/FAIL line for criterion ``n``."""

    def record(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
