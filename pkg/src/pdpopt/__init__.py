"""
Distributed consensus-based primal-dual perturbation for network problems
with coupled inequality constraints::

    minimize    F(sum_i f_i(x_i))
    subject to  sum_i g_i(x_i) <= 0,   x_i in X_i
"""

from .errors import *  # noqa: F401,F403
from .network import (CyclicEdgeSchedule, PeriodicSchedule, RandomEdgeSchedule, StaticSchedule,
                      WeightMatrix, check_assumption4, metropolis_weights, mix)
from .problem import (AgentFunctions, Dimensions, GlobalCost, PerturbationMode, ProblemSpec,
                      SlaterCertificate, eval_lagrangian, validate_problem)
from .projections import Ball, Box, NonnegativeOrthant, Polyhedron
from .solver import AverageKind, RunTrace, SolverConfig, centralized_diagnostics, run

__version__ = "0.1.0"
