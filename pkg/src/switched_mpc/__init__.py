"""Dwell-time constrained MPC for switched nonlinear systems.

Relaxed mode weights are move-blocked so that every block spans the minimum
dwell time; sum-up rounding then recovers a binary plan with a certified
integration-gap bound.  Terminal sets for switched linear systems come from
:func:`switched_mpc.invariants.compute_srci`.
"""

from .integrator import GridSpec, IntegrationDiverged, simulate, step, step_with_sensitivities
from .invariants import Polytope, SwitchedLinearSystem, compute_srci, verify_srci
from .model import ModelError, SwitchedModel, builtin_example1, builtin_example2, get_builtin
from .mpc import (ClosedLoopTrace, ControllerState, SolverFailure, compute_h, metrics, mpc_step,
                  run_closed_loop, verify_dwell)
from .ocp import BlockedOcp, OcpSolution, SolverOptions, build, solve_fixed, solve_relaxed
from .oracle import OracleRefused, best_plan, enumerate_plans
from .plan import ModePlan, block_layout
from .rounding import error_bound, max_integration_gap, sur_round

__version__ = "0.1.0"

__all__ = [
    "BlockedOcp", "ClosedLoopTrace", "ControllerState", "GridSpec", "IntegrationDiverged", "ModePlan",
    "ModelError", "OcpSolution", "OracleRefused", "Polytope", "SolverFailure", "SolverOptions",
    "SwitchedLinearSystem", "SwitchedModel", "best_plan", "block_layout", "build", "builtin_example1",
    "builtin_example2", "compute_h", "compute_srci", "enumerate_plans", "error_bound", "get_builtin",
    "max_integration_gap", "metrics", "mpc_step", "run_closed_loop", "simulate", "solve_fixed",
    "solve_relaxed", "step", "step_with_sensitivities", "sur_round", "verify_dwell", "verify_srci",
]
