"""Switched-system models and the two built-in benchmarks.

A model carries ``Q`` mode vector fields ``f_j(x, u)``, the per-mode running
costs ``L_j(x, u)``, a terminal cost, simple state/input bounds and a general
path constraint ``g(x, u) <= 0``.  Mode weights ``b`` live on the unit
simplex; the convexified field is ``sum_j b_j f_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "SwitchedModel",
    "ModelError",
    "as_convex_combination",
    "is_binary",
    "vertex",
    "eval_convexified",
    "builtin_example1",
    "builtin_example2",
    "get_builtin",
    "SIMPLEX_TOL",
]

SIMPLEX_TOL = 1e-10

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]
FieldJac = Callable[[np.ndarray, np.ndarray], "tuple[np.ndarray, np.ndarray]"]


class ModelError(ValueError):
    """Bad model definition or a call with mismatched dimensions."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SwitchedModel:
    """Immutable description of a switched nonlinear system.

    ``dynamics_jac[j](x, u)`` returns ``(df_j/dx, df_j/du)`` and
    ``path_jac(x, u)`` returns ``(dg/dx, dg/du)``; both are optional and the
    integrator falls back to finite differences when they are missing.
    Cost derivatives (``running_cost_derivs[j](x, u) -> (gx, gu, hess)``,
    ``terminal_cost_derivs(x) -> (g, hess)``) are likewise optional.
    """

    name: str
    n_x: int
    n_u: int
    dynamics: tuple
    running_cost: tuple
    terminal_cost: Callable[[np.ndarray], float]
    state_lb: np.ndarray
    state_ub: np.ndarray
    input_lb: np.ndarray
    input_ub: np.ndarray
    path_constraints: Optional[Field] = None
    n_path: int = 0
    terminal_set: Optional[object] = None
    dynamics_jac: Optional[tuple] = None
    path_jac: Optional[FieldJac] = None
    running_cost_derivs: Optional[tuple] = None
    terminal_cost_derivs: Optional[Callable] = None
    # closed-loop evaluation: "tracking" (sum of squared state error) or
    # "energy" (weighted sum of squared inputs plus final tracking error)
    metric: str = "tracking"
    target: Optional[np.ndarray] = None
    metric_input_weight: float = 1.0
    # continuous-time mode matrices when every mode is linear and autonomous
    linear_modes: Optional[tuple] = None
    # True when every callable accepts stacked (K, n) arguments
    vectorized: bool = False

    def __post_init__(self):
        Q = len(self.dynamics)
        if Q < 2:
            raise ModelError(f"a switched model needs at least 2 modes, got {Q}")
        if len(self.running_cost) != Q:
            raise ModelError("running_cost must have one entry per mode")
        if self.dynamics_jac is not None and len(self.dynamics_jac) != Q:
            raise ModelError("dynamics_jac must have one entry per mode")
        if self.running_cost_derivs is not None and len(self.running_cost_derivs) != Q:
            raise ModelError("running_cost_derivs must have one entry per mode")
        for attr, size in (("state_lb", self.n_x), ("state_ub", self.n_x),
                           ("input_lb", self.n_u), ("input_ub", self.n_u)):
            arr = _frozen(getattr(self, attr)).reshape(-1)
            if arr.size != size:
                raise ModelError(f"{attr} has length {arr.size}, expected {size}")
            object.__setattr__(self, attr, arr)
        if np.any(self.input_lb > self.input_ub):
            raise ModelError("input_lb must not exceed input_ub")
        if np.any(self.state_lb > self.state_ub):
            raise ModelError("state_lb must not exceed state_ub")
        if self.target is not None:
            object.__setattr__(self, "target", _frozen(self.target).reshape(-1))
        if self.linear_modes is not None:
            object.__setattr__(self, "linear_modes",
                               tuple(_frozen(A) for A in self.linear_modes))
        if self.metric not in ("tracking", "energy"):
            raise ModelError(f"unknown metric {self.metric!r}")

    @property
    def Q(self) -> int:
        return len(self.dynamics)

    @property
    def autonomous(self) -> bool:
        return self.n_u == 0

    def state_box_feasible(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.state_lb - tol) and np.all(x <= self.state_ub + tol))

    def path(self, x, u) -> np.ndarray:
        if self.path_constraints is None:
            return np.zeros(0)
        return np.asarray(self.path_constraints(x, u), dtype=float).reshape(-1)


def as_convex_combination(b, Q: Optional[int] = None, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a mode-weight vector and return it as a float array."""
    b = np.asarray(b, dtype=float).reshape(-1)
    if Q is not None and b.size != Q:
        raise ModelError(f"mode weights have length {b.size}, expected {Q}")
    if np.any(b < -tol) or np.any(b > 1.0 + tol) or abs(b.sum() - 1.0) > tol:
        raise ModelError(f"mode weights {b} are not on the unit simplex")
    return b


def is_binary(b, tol: float = 0.0) -> bool:
    b = np.asarray(b, dtype=float)
    return bool(np.sum(np.abs(b - 1.0) <= tol) == 1 and np.sum(np.abs(b) <= tol) == b.size - 1)


def vertex(j: int, Q: int) -> np.ndarray:
    """Simplex vertex selecting mode ``j`` (0-based)."""
    e = np.zeros(Q)
    e[j] = 1.0
    return e


def _check_xu(model: SwitchedModel, x, u):
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.zeros(0) if u is None else np.asarray(u, dtype=float).reshape(-1)
    if x.size != model.n_x:
        raise ModelError(f"state has length {x.size}, expected {model.n_x}")
    if u.size != model.n_u:
        raise ModelError(f"input has length {u.size}, expected {model.n_u}")
    return x, u


def eval_convexified(model: SwitchedModel, x, u, b) -> np.ndarray:
    """Evaluate ``sum_j b_j f_j(x, u)``."""
    x, u = _check_xu(model, x, u)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != model.Q:
        raise ModelError(f"mode weights have length {b.size}, expected {model.Q}")
    out = np.zeros(model.n_x)
    for bj, f in zip(b, model.dynamics):
        if bj != 0.0:
            out += bj * np.asarray(f(x, u), dtype=float)
    return out


# ---------------------------------------------------------------------------
# Built-ins evaluate on the last axis, so they accept a single point or a
# stacked batch of shape (K, n).

EX1_A1 = np.array([[-5.0, -3.0], [5.0, -1.0]])
EX1_A2 = np.array([[-1.0, 5.0], [-3.0, -5.0]])


def _linear_field(A):
    return lambda x, u: x @ A.T


def _linear_jac(A):
    def jac(x, u):
        lead = np.shape(x)[:-1]
        return np.broadcast_to(A, lead + A.shape), np.zeros(lead + (A.shape[0], 0))
    return jac


def _ex1_running(x, u):
    return np.sum(x * x, axis=-1)


def _ex1_running_derivs(x, u):
    lead = np.shape(x)[:-1]
    return 2.0 * x, np.zeros(lead + (0,)), np.broadcast_to(2.0 * np.eye(2), lead + (2, 2))


def builtin_example1() -> SwitchedModel:
    """Two stable linear modes, no inputs; regulate to the origin inside a box."""
    return SwitchedModel(
        name="example1",
        n_x=2,
        n_u=0,
        dynamics=(_linear_field(EX1_A1), _linear_field(EX1_A2)),
        running_cost=(_ex1_running, _ex1_running),
        terminal_cost=lambda x: float(10.0 * (x @ x)),
        state_lb=[-1.0, -0.05],
        state_ub=[0.05, 1.0],
        input_lb=[],
        input_ub=[],
        dynamics_jac=(_linear_jac(EX1_A1), _linear_jac(EX1_A2)),
        running_cost_derivs=(_ex1_running_derivs, _ex1_running_derivs),
        terminal_cost_derivs=lambda x: (20.0 * x, 20.0 * np.eye(2)),
        metric="tracking",
        target=np.zeros(2),
        linear_modes=(EX1_A1, EX1_A2),
        vectorized=True,
    )


# ---------------------------------------------------------------------------
# Example 2: bevel-tip flexible needle

KAPPA = 0.22
EX2_TARGET = np.array([-2.0, 3.5, 10.0, 0.0, 0.0, 0.0])
EX2_OBSTACLES = np.array([[0.0, 0.0, 5.0], [1.0, 3.0, 7.0], [-2.0, 0.0, 10.0]])
EX2_RADIUS = 2.0
EX2_INPUT_WEIGHT = 0.01
EX2_TERMINAL_WEIGHT = 10.0


def _needle_insert(x, u):
    s4, c4 = np.sin(x[..., 3]), np.cos(x[..., 3])
    s5, c5 = np.sin(x[..., 4]), np.cos(x[..., 4])
    s6, c6 = np.sin(x[..., 5]), np.cos(x[..., 5])
    u1 = u[..., 0]
    return np.stack([
        s5 * u1,
        -c5 * s4 * u1,
        c4 * c5 * u1,
        KAPPA * c6 / c5 * u1,
        KAPPA * s6 * u1,
        -KAPPA * c6 * s5 / c5 * u1,
    ], axis=-1)


def _needle_insert_jac(x, u):
    s4, c4 = np.sin(x[..., 3]), np.cos(x[..., 3])
    s5, c5 = np.sin(x[..., 4]), np.cos(x[..., 4])
    s6, c6 = np.sin(x[..., 5]), np.cos(x[..., 5])
    u1 = u[..., 0]
    sec5 = 1.0 / c5
    tan5 = s5 / c5
    lead = np.shape(x)[:-1]
    fx = np.zeros(lead + (6, 6))
    fx[..., 0, 4] = c5 * u1
    fx[..., 1, 3] = -c5 * c4 * u1
    fx[..., 1, 4] = s5 * s4 * u1
    fx[..., 2, 3] = -s4 * c5 * u1
    fx[..., 2, 4] = -c4 * s5 * u1
    fx[..., 3, 4] = KAPPA * c6 * sec5 * tan5 * u1
    fx[..., 3, 5] = -KAPPA * s6 * sec5 * u1
    fx[..., 4, 5] = KAPPA * c6 * u1
    fx[..., 5, 4] = -KAPPA * c6 * sec5 * sec5 * u1
    fx[..., 5, 5] = KAPPA * s6 * tan5 * u1
    fu = np.zeros(lead + (6, 2))
    fu[..., 0] = np.stack([s5, -c5 * s4, c4 * c5, KAPPA * c6 * sec5, KAPPA * s6, -KAPPA * c6 * tan5],
                          axis=-1)
    return fx, fu


def _needle_turn(x, u):
    out = np.zeros(np.shape(x))
    out[..., 5] = u[..., 1]
    return out


def _needle_turn_jac(x, u):
    lead = np.shape(x)[:-1]
    fu = np.zeros(lead + (6, 2))
    fu[..., 5, 1] = 1.0
    return np.zeros(lead + (6, 6)), fu


def _needle_obstacles(x, u):
    diff = x[..., None, :3] - EX2_OBSTACLES
    return EX2_RADIUS ** 2 - np.sum(diff * diff, axis=-1)


def _needle_obstacles_jac(x, u):
    lead = np.shape(x)[:-1]
    gx = np.zeros(lead + (3, 6))
    gx[..., :3] = -2.0 * (x[..., None, :3] - EX2_OBSTACLES)
    return gx, np.zeros(lead + (3, 2))


def _ex2_running(x, u):
    return EX2_INPUT_WEIGHT * np.sum(u * u, axis=-1)


def _ex2_running_derivs(x, u):
    lead = np.shape(x)[:-1]
    hess = np.zeros(lead + (8, 8))
    hess[..., 6, 6] = hess[..., 7, 7] = 2.0 * EX2_INPUT_WEIGHT
    return np.zeros(lead + (6,)), 2.0 * EX2_INPUT_WEIGHT * u, hess


def _ex2_terminal(x):
    e = x - EX2_TARGET
    return float(EX2_TERMINAL_WEIGHT * (e @ e))


def _ex2_terminal_derivs(x):
    return 2.0 * EX2_TERMINAL_WEIGHT * (x - EX2_TARGET), 2.0 * EX2_TERMINAL_WEIGHT * np.eye(6)


def builtin_example2() -> SwitchedModel:
    """Needle steering: mode 1 inserts along a curved arc, mode 2 rolls the tip."""
    inf = np.inf
    return SwitchedModel(
        name="example2",
        n_x=6,
        n_u=2,
        dynamics=(_needle_insert, _needle_turn),
        running_cost=(_ex2_running, _ex2_running),
        terminal_cost=_ex2_terminal,
        state_lb=[-inf] * 6,
        state_ub=[inf] * 6,
        input_lb=[0.0, -np.pi / 2],
        input_ub=[5.0, np.pi / 2],
        path_constraints=_needle_obstacles,
        n_path=3,
        dynamics_jac=(_needle_insert_jac, _needle_turn_jac),
        path_jac=_needle_obstacles_jac,
        running_cost_derivs=(_ex2_running_derivs, _ex2_running_derivs),
        terminal_cost_derivs=_ex2_terminal_derivs,
        metric="energy",
        target=EX2_TARGET,
        metric_input_weight=EX2_INPUT_WEIGHT,
        vectorized=True,
    )


_BUILTINS = {"example1": builtin_example1, "example2": builtin_example2}


def get_builtin(name: str) -> SwitchedModel:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ModelError(f"unknown built-in model {name!r}; choose from {sorted(_BUILTINS)}") from None
