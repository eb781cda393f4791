"""Closed-loop MPC with a minimum dwell time (shrinking/receding horizon).

Each sample solves the relaxed problem, rounds the free mode blocks with
sum-up rounding, re-solves with the rounded modes (unless the model has no
continuous inputs) and applies the first input and mode.  The remaining hold
length ``h`` and the active mode ``b_act`` carry the dwell-time bookkeeping
from one sample to the next.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .integrator import GridSpec, step
from .model import ModelError, SwitchedModel
from .ocp import BlockedOcp, OcpSolution, SolverOptions, build, solve_fixed, solve_relaxed
from .plan import ModePlan
from .rounding import sur_round

__all__ = [
    "ControllerState",
    "ClosedLoopTrace",
    "SolverFailure",
    "WarmStart",
    "StepInfo",
    "compute_h",
    "mpc_step",
    "run_closed_loop",
    "verify_dwell",
    "metrics",
    "TRACE_HEADER",
]

log = logging.getLogger(__name__)

TRACE_HEADER = "# switched-mpc trace v1"


class SolverFailure(RuntimeError):
    """NLP #1 produced no usable iterate; the closed loop cannot continue."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class WarmStart:
    states: np.ndarray
    inputs: np.ndarray
    mode_blocks: np.ndarray


@dataclass
class ControllerState:
    l: int
    h: int
    b_act: Optional[np.ndarray] = None
    t_act: int = 0  # samples since the active mode was switched on
    i: int = 0
    warm_relaxed: Optional[WarmStart] = None
    warm_fixed: Optional[WarmStart] = None
    last_mode: Optional[int] = None

    @classmethod
    def fresh(cls, l: int) -> "ControllerState":
        if l < 1:
            raise ModelError(f"dwell length l must be >= 1, got {l}")
        return cls(l=l, h=l)

    def check(self):
        if not 1 <= self.h <= self.l:
            raise ModelError(f"controller hold count h={self.h} outside [1, {self.l}]")
        if (self.b_act is None) != (self.h == self.l):
            raise ModelError("b_act must be absent exactly when a fresh block starts")


@dataclass
class StepInfo:
    relaxed: OcpSolution
    fixed: Optional[OcpSolution]
    plan: ModePlan
    h: int
    flagged: bool
    round_time: float


@dataclass
class ClosedLoopTrace:
    dt: float
    states: np.ndarray  # (n+1, n_x)
    inputs: np.ndarray  # (n, n_u)
    modes: np.ndarray  # (n,) applied mode indices
    status1: List[str]
    status2: List[str]
    objective: np.ndarray
    hold: np.ndarray  # h at each sample
    flagged: np.ndarray
    nlp1_time: np.ndarray
    nlp2_time: np.ndarray
    round_time: np.ndarray
    E: float = float("nan")
    res: float = float("nan")

    @property
    def n_steps(self) -> int:
        return len(self.modes)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def to_csv(self, path=None) -> str:
        n_x = self.states.shape[1]
        n_u = self.inputs.shape[1]
        buf = io.StringIO()
        buf.write(TRACE_HEADER + "\n")
        buf.write(f"# dt={self.dt!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "t"] + [f"x{j + 1}" for j in range(n_x)] + [f"u{j + 1}" for j in range(n_u)]
                   + ["mode_index", "status1", "status2", "objective"])
        for i in range(self.n_steps + 1):
            x = [repr(float(v)) for v in self.states[i]]
            if i < self.n_steps:
                u = [repr(float(v)) for v in self.inputs[i]]
                rest = [int(self.modes[i]), self.status1[i], self.status2[i], repr(float(self.objective[i]))]
            else:
                u = [""] * n_u
                rest = ["", "", "", ""]
            w.writerow([i, repr(float(self.dt * i))] + x + u + rest)
        buf.write(f"# E={self.E!r} res={self.res!r}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "ClosedLoopTrace":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0].strip() != TRACE_HEADER:
            raise ModelError(f"{path}: not a trace file (missing '{TRACE_HEADER}')")
        dt = float(lines[1].split("=", 1)[1])
        rows = list(csv.reader([ln for ln in lines[2:] if not ln.startswith("#")]))
        head = rows[0]
        xcols = [j for j, c in enumerate(head) if c.startswith("x")]
        ucols = [j for j, c in enumerate(head) if c.startswith("u")]
        body = rows[1:]
        states = np.array([[float(r[j]) for j in xcols] for r in body])
        full = [r for r in body if r[head.index("mode_index")] != ""]
        inputs = np.array([[float(r[j]) for j in ucols] for r in full]).reshape(len(full), len(ucols))
        modes = np.array([int(r[head.index("mode_index")]) for r in full], dtype=int)
        n = len(full)
        return cls(dt, states, inputs, modes, [r[head.index("status1")] for r in full],
                   [r[head.index("status2")] for r in full],
                   np.array([float(r[head.index("objective")]) for r in full]),
                   np.zeros(n, dtype=int), np.zeros(n, dtype=bool), np.zeros(n), np.zeros(n), np.zeros(n))


def compute_h(dwell: float, t_act: float, dt: float) -> int:
    """Intervals the current mode must still hold: ``ceil((dwell - t_act) / dt)``, at least 0."""
    if not dt > 0:
        raise ModelError("dt must be positive")
    if t_act < 0:
        raise ModelError("t_act must be nonnegative")
    # round off representation noise such as 0.4 / 0.1 = 4.000000000000001
    q = round((dwell - t_act) / dt, 9)
    return max(0, math.ceil(q))


def _shift(sol: OcpSolution, blocks: np.ndarray, ocp: BlockedOcp, reset: bool) -> WarmStart:
    """Shift a solution one interval forward to seed the next sample.

    In the shrinking phase the block layout is unchanged; on a reset the first
    block is dropped and a copy of the last one is appended, together with
    ``l - 1`` copies of the final state and input.
    """
    X = sol.states[1:]
    U = sol.inputs[1:]
    P = np.array(blocks, dtype=float)
    if reset:
        pad = ocp.l
        P = np.vstack([P[1:], P[-1:]])
        X = np.vstack([X, np.repeat(X[-1:], pad, axis=0)])
        last_u = sol.inputs[-1:] if len(sol.inputs) else np.zeros((1, ocp.model.n_u))
        U = np.vstack([U, np.repeat(last_u, pad, axis=0)])
    return WarmStart(X, U, P)


def _better(a: OcpSolution, b: OcpSolution) -> bool:
    """Prefer usable, then converged, then lower objective."""
    ka = (not a.usable, a.status != "converged", a.objective)
    kb = (not b.usable, b.status != "converged", b.objective)
    return ka < kb


def mpc_step(controller: ControllerState, model: SwitchedModel, grid: GridSpec, x_measured,
             opts: SolverOptions = SolverOptions(), terminal_set=None):
    """One sample of the dwell-time MPC; mutates ``controller``.

    Returns ``(u0, b0, info)``.
    """
    controller.check()
    l, h = controller.l, controller.h
    ocp = build(model, grid, l, h, controller.b_act, x0=x_measured, terminal_set=terminal_set)
    sol1 = solve_relaxed(ocp, controller.warm_relaxed, opts)
    if opts.cold_restart and controller.warm_relaxed is not None:
        alt = solve_relaxed(ocp, None, opts)
        if _better(alt, sol1):
            log.debug("sample %d: cold start wins (%.6g < %.6g)", controller.i, alt.objective, sol1.objective)
            alt.solve_time += sol1.solve_time
            sol1 = alt
    if not sol1.usable:
        raise SolverFailure(f"NLP #1 failed at sample {controller.i} (status {sol1.status})")
    t0 = time.perf_counter()
    plan = sur_round(sol1.mode_blocks)
    t_round = time.perf_counter() - t0
    if controller.b_act is not None and not np.array_equal(plan.blocks[0], controller.b_act):
        raise AssertionError("rounding changed the fixed first block")

    if model.autonomous:
        sol2 = solve_fixed(ocp, plan, None, opts)
    else:
        warm = controller.warm_fixed if controller.warm_fixed is not None else sol1
        sol2 = solve_fixed(ocp, plan, warm, opts)
        if opts.dual_seed and warm is not sol1:
            alt = solve_fixed(ocp, plan, sol1, opts)
            if _better(alt, sol2):
                alt.solve_time += sol2.solve_time
                sol2 = alt
    flagged = sol2.status != "converged" or sol1.status == "infeasible"
    if not sol2.usable:
        log.warning("sample %d: mode-fixed problem has no usable iterate, applying the relaxed input",
                    controller.i)

    b0 = plan.blocks[0].copy()
    src = sol2 if sol2.usable else sol1
    u0 = src.inputs[0].copy() if model.n_u else np.zeros(0)

    reset = h == 1
    controller.warm_relaxed = _shift(sol1, sol1.mode_blocks.blocks, ocp, reset)
    controller.warm_fixed = _shift(src, plan.blocks, ocp, reset)
    if reset:
        controller.h = l
        controller.b_act = None
    else:
        controller.h = h - 1
        controller.b_act = b0
    mode = int(np.argmax(b0))
    controller.t_act = 1 if mode != controller.last_mode else controller.t_act + 1
    controller.last_mode = mode
    controller.i += 1
    return u0, b0, StepInfo(sol1, sol2, plan, h, flagged, t_round)


def run_closed_loop(model: SwitchedModel, grid: GridSpec, l: int, x0, n_steps: int,
                    opts: SolverOptions = SolverOptions(), terminal_set=None) -> ClosedLoopTrace:
    """Run the controller against the nominal plant for ``n_steps`` samples."""
    if n_steps < 1:
        raise ModelError("n_steps must be >= 1")
    ctrl = ControllerState.fresh(l)
    x = np.asarray(x0, dtype=float).reshape(-1)
    states = [x]
    inputs, modes, s1, s2, obj, hold, flags, t1, t2, tr = [], [], [], [], [], [], [], [], [], []

    def trace():
        tr_ = ClosedLoopTrace(grid.dt, np.array(states), np.array(inputs).reshape(len(inputs), model.n_u),
                              np.array(modes, dtype=int), s1, s2, np.array(obj), np.array(hold, dtype=int),
                              np.array(flags, dtype=bool), np.array(t1), np.array(t2), np.array(tr))
        if len(modes):
            tr_.E, tr_.res = metrics(tr_, model)
        return tr_

    for i in range(n_steps):
        try:
            u0, b0, info = mpc_step(ctrl, model, grid, x, opts, terminal_set)
        except (SolverFailure, ArithmeticError) as exc:
            raise SolverFailure(f"closed loop stopped at sample {i}: {exc}", trace()) from exc
        x = step(model, x, u0, b0, grid.dt, opts.substeps)
        states.append(x)
        inputs.append(u0)
        modes.append(int(np.argmax(b0)))
        s1.append(info.relaxed.status)
        s2.append("skipped" if model.autonomous else info.fixed.status)
        obj.append(info.fixed.objective)
        hold.append(info.h)
        flags.append(info.flagged)
        t1.append(info.relaxed.solve_time)
        t2.append(0.0 if model.autonomous else info.fixed.solve_time)
        tr.append(info.round_time)
        log.info("sample %d: h=%d mode=%d nlp1=%s nlp2=%s", i, info.h, modes[-1], s1[-1], s2[-1])
    return trace()


def verify_dwell(modes, l: int, allow_truncated_tail: bool = True) -> bool:
    """True when every run of equal modes lasts at least ``l`` samples.

    With ``allow_truncated_tail`` the final run may be shorter, since the
    simulation can end before the mode would have switched.
    """
    modes = list(modes)
    if l <= 1 or not modes:
        return True
    runs = []
    start = 0
    for k in range(1, len(modes) + 1):
        if k == len(modes) or modes[k] != modes[start]:
            runs.append(k - start)
            start = k
    body = runs[:-1] if allow_truncated_tail else runs
    return all(r >= l for r in body)


def metrics(trace: ClosedLoopTrace, model: SwitchedModel):
    """Return ``(E, res)`` over the closed-loop samples ``t_1 .. t_n``.

    ``tracking`` models: ``E`` sums squared distances to the target and
    ``res`` the positive parts of the state-box violations.  ``energy``
    models: ``E`` is ``model.metric_input_weight`` times the summed squared
    inputs plus the squared final distance to the target; ``res`` is the
    largest positive path-constraint value.
    """
    X = np.asarray(trace.states)[1:]
    target = np.zeros(model.n_x) if model.target is None else model.target
    if model.metric == "energy":
        U = np.asarray(trace.inputs)
        E = float(model.metric_input_weight * np.sum(U * U) + np.sum((X[-1] - target) ** 2))
        res = 0.0
        if model.n_path and len(U):
            g = np.array([model.path(x, u) for x, u in zip(np.asarray(trace.states)[:-1], U)])
            res = float(max(0.0, g.max()))
        return E, res
    E = float(np.sum((X - target) ** 2))
    res = float(np.sum(np.maximum(X - model.state_ub, 0.0)) + np.sum(np.maximum(model.state_lb - X, 0.0)))
    return E, res
