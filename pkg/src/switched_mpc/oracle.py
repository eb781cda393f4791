"""Exhaustive references for small instances: every binary plan, solved with modes fixed."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .integrator import GridSpec
from .model import ModelError, SwitchedModel
from .ocp import OcpSolution, SolverOptions, build, solve_fixed
from .plan import ModePlan, block_layout

__all__ = ["ENUMERATION_LIMIT", "OracleRefused", "OracleResult", "enumerate_plans", "best_plan"]

ENUMERATION_LIMIT = 10 ** 6


class OracleRefused(ModelError):
    """The enumeration would exceed :data:`ENUMERATION_LIMIT` plans."""

    def __init__(self, count: int):
        super().__init__(f"refusing to enumerate {count} plans (limit {ENUMERATION_LIMIT})")
        self.count = count


@dataclass
class OracleResult:
    plan: Optional[ModePlan]
    objective: float
    feasible: bool
    n_plans: int
    solutions: List[OcpSolution] = field(default_factory=list, repr=False)


def enumerate_plans(Q: int, M: int, first_block=None, l: int = 1, h: Optional[int] = None,
                    dt: float = 1.0) -> List[ModePlan]:
    """All binary ``M``-block plans over ``Q`` modes in lexicographic order.

    With ``first_block`` given only the remaining ``M - 1`` blocks vary.
    """
    if Q < 2 or M < 1:
        raise ModelError("enumerate_plans needs Q >= 2 and M >= 1")
    free = M - (first_block is not None)
    count = Q ** free
    if count > ENUMERATION_LIMIT:
        raise OracleRefused(count)
    eye = np.eye(Q)
    head = []
    if first_block is not None:
        fb = np.asarray(first_block, dtype=float).reshape(-1)
        if fb.size != Q:
            raise ModelError("first block has the wrong number of modes")
        head = [fb]
    h = l if h is None else h
    return [ModePlan(np.array(head + [eye[j] for j in seq]).reshape(M, Q), l, h, dt)
            for seq in itertools.product(range(Q), repeat=free)]


def best_plan(model: SwitchedModel, grid: GridSpec, l: int, x0, opts: SolverOptions = SolverOptions(),
              h: Optional[int] = None, b_act=None, terminal_set=None, keep_solutions: bool = False) -> OracleResult:
    """Solve the mode-fixed problem for every plan and keep the best.

    Without softening, plans whose solution violates a constraint only count
    when no plan is feasible; the result is then flagged ``feasible=False``.
    With ``opts.soften`` every usable solve is a feasible point of the
    penalized problem, so all of them compete on the penalized objective
    (``feasible`` still reports whether the winner meets the constraints).
    Ties go to the lexicographically first plan.
    """
    M, _ = block_layout(grid.N, l, h)
    plans = enumerate_plans(model.Q, M, b_act, l, h, grid.dt)
    ocp = build(model, grid, l, h, b_act, x0=x0, terminal_set=terminal_set)
    best = None
    best_any = None
    sols = []
    for plan in plans:
        sol = solve_fixed(ocp, plan, None, opts)
        if keep_solutions:
            sols.append(sol)
        if not sol.usable:
            continue
        ok = opts.soften or (sol.constraint_violation <= opts.tol_feas and sol.status != "infeasible")
        if best_any is None or sol.objective < best_any[1].objective:
            best_any = (plan, sol)
        if ok and (best is None or sol.objective < best[1].objective):
            best = (plan, sol)
    if best is not None:
        feasible = best[1].constraint_violation <= opts.tol_feas
        return OracleResult(best[0], best[1].objective, feasible, len(plans), sols)
    if best_any is not None:
        return OracleResult(best_any[0], best_any[1].objective, False, len(plans), sols)
    return OracleResult(None, np.inf, False, len(plans), sols)
