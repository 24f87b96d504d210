"""Build a small coupled QP by hand, run the distributed solver and check it against the reference."""
import numpy as np

from pdpopt import solver
from pdpopt.families import AffineConstraint, LinearMap, QuadraticCost, build_problem
from pdpopt.network import StaticSchedule, ring_graph
from pdpopt.oracle import solve_reference
from pdpopt.projections import Box

# four agents share one resource: min (sum x_i - 3)^2  s.t.  sum x_i <= 2,  x_i in [0, 1]
n = 4
spec = build_problem(QuadraticCost([[2.0]], [-6.0], 9.0),
                     [LinearMap([[1.0]]) for _ in range(n)],
                     [AffineConstraint([[1.0]], [2.0 / n]) for _ in range(n)],
                     [Box([0.0], [1.0]) for _ in range(n)],
                     [np.zeros(1) for _ in range(n)])

rho = 0.9 * spec.theorem_rho1_bound()
# a larger step constant lets the multiplier reach its optimum of 2 within a few thousand rounds
config = solver.SolverConfig(step_a=10.0, rho1=rho, rho2=rho, max_iters=5000, average_kind="uniform")
states, trace = solver.run(spec, config, StaticSchedule.from_adjacency(ring_graph(n)))
ref = solve_reference(spec)

last = trace[-1]
print(f"D_lambda = {spec.d_lambda:.3f}, rho1 = rho2 = {rho:.4f}")
print(f"objective {last['obj_avg']:.6f} (reference {ref.objective:.6f})")
print(f"violation {last['viol']:.2e}, dual disagreement {last['dual_disagree']:.2e}")
print("local multipliers:", np.round([s.lam[0] for s in states], 4), "reference", np.round(ref.lambda_star, 4))
