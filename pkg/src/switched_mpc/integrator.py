"""Fixed-step RK4 integration of the convexified dynamics with forward sensitivities.

Every routine works on a stack of ``K`` independent intervals at once
(``X`` of shape ``(K, n_x)``); the single-interval functions are thin
wrappers.  Vectorized models are evaluated in one call per mode, others
point by point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ModelError, SwitchedModel, _check_xu

__all__ = [
    "GridSpec",
    "IntegrationDiverged",
    "step",
    "step_with_sensitivities",
    "batch_step",
    "batch_step_with_sensitivities",
    "simulate",
    "rk4_matrix",
    "FD_STEP",
]

FD_STEP = 1e-6


class IntegrationDiverged(ArithmeticError):
    """The integrator produced a non-finite state."""

    def __init__(self, message, values=None):
        super().__init__(message)
        self.values = values


@dataclass(frozen=True)
class GridSpec:
    N: int
    dt: float
    substeps: int = 4

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ModelError(f"grid needs N >= 1 intervals, got {self.N}")
        if not self.dt > 0:
            raise ModelError(f"grid step must be positive, got {self.dt}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ModelError(f"substeps must be >= 1, got {self.substeps}")

    @property
    def horizon(self) -> float:
        return self.N * self.dt


def _check_finite(x, what="state"):
    if not np.all(np.isfinite(x)):
        raise IntegrationDiverged(f"integration produced a non-finite {what}", values=np.array(x))


def _apply(model: SwitchedModel, fn, X, U):
    if model.vectorized:
        return np.asarray(fn(X, U), dtype=float)
    return np.array([np.asarray(fn(x, u), dtype=float) for x, u in zip(X, U)])


def _fd_jac(model, fn, X, U):
    K, n_x, n_u = X.shape[0], X.shape[1], U.shape[1]
    f0 = _apply(model, fn, X, U).reshape(K, -1)
    m = f0.shape[1]
    fx = np.empty((K, m, n_x))
    fu = np.empty((K, m, n_u))
    for i in range(n_x):
        Xp = X.copy()
        Xp[:, i] += FD_STEP
        fx[:, :, i] = (_apply(model, fn, Xp, U).reshape(K, -1) - f0) / FD_STEP
    for i in range(n_u):
        Up = U.copy()
        Up[:, i] += FD_STEP
        fu[:, :, i] = (_apply(model, fn, X, Up).reshape(K, -1) - f0) / FD_STEP
    return fx, fu


def mode_jacobians(model: SwitchedModel, j: int, X, U):
    """Stacked ``(df_j/dx, df_j/du)`` for every row of ``X, U``."""
    if model.dynamics_jac is None:
        return _fd_jac(model, model.dynamics[j], X, U)
    jac = model.dynamics_jac[j]
    if model.vectorized:
        fx, fu = jac(X, U)
        return np.asarray(fx, dtype=float), np.asarray(fu, dtype=float)
    pairs = [jac(x, u) for x, u in zip(X, U)]
    fx = np.array([np.asarray(p[0], dtype=float) for p in pairs])
    fu = np.array([np.asarray(p[1], dtype=float).reshape(model.n_x, model.n_u) for p in pairs])
    return fx, fu


def _field(model, X, U, B):
    F = np.zeros_like(X)
    for j, f in enumerate(model.dynamics):
        w = B[:, j]
        if np.any(w != 0.0):
            F += w[:, None] * _apply(model, f, X, U)
    return F


def _field_and_derivs(model, X, U, B):
    K, n_x, n_u, Q = X.shape[0], model.n_x, model.n_u, model.Q
    F = np.zeros((K, n_x))
    Fx = np.zeros((K, n_x, n_x))
    Fu = np.zeros((K, n_x, n_u))
    Fb = np.empty((K, n_x, Q))
    for j in range(Q):
        fj = _apply(model, model.dynamics[j], X, U)
        Fb[:, :, j] = fj
        w = B[:, j]
        if np.any(w != 0.0):
            F += w[:, None] * fj
            fx, fu = mode_jacobians(model, j, X, U)
            Fx += w[:, None, None] * fx
            Fu += w[:, None, None] * fu
    return F, Fx, Fu, Fb


def _stack_args(model, X, U, B):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = X.shape[0]
    U = np.zeros((K, 0)) if model.n_u == 0 and (U is None or np.size(U) == 0) else \
        np.asarray(U, dtype=float).reshape(K, model.n_u)
    B = np.asarray(B, dtype=float).reshape(K, model.Q)
    if X.shape[1] != model.n_x:
        raise ModelError(f"state has length {X.shape[1]}, expected {model.n_x}")
    return X, U, B


def batch_step(model: SwitchedModel, X, U, B, dt: float, substeps: int = 4) -> np.ndarray:
    """Advance ``K`` independent intervals; rows of ``X, U, B`` are paired."""
    if not dt > 0:
        raise ModelError("dt must be positive")
    X, U, B = _stack_args(model, X, U, B)
    h = dt / substeps
    for _ in range(substeps):
        k1 = _field(model, X, U, B)
        k2 = _field(model, X + 0.5 * h * k1, U, B)
        k3 = _field(model, X + 0.5 * h * k2, U, B)
        k4 = _field(model, X + h * k3, U, B)
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(X)
    return X


def batch_step_with_sensitivities(model: SwitchedModel, X, U, B, dt: float, substeps: int = 4):
    """Stacked version of :func:`step_with_sensitivities`.

    Returns ``(X_next, D_x, D_u, D_b)`` with leading dimension ``K``.
    """
    if not dt > 0:
        raise ModelError("dt must be positive")
    X, U, B = _stack_args(model, X, U, B)
    K, n_x, n_u, Q = X.shape[0], model.n_x, model.n_u, model.Q
    nw = n_x + n_u + Q
    S = np.zeros((K, n_x, nw))
    S[:, :, :n_x] = np.eye(n_x)
    h = dt / substeps

    def stage(Xs, dXs):
        F, Fx, Fu, Fb = _field_and_derivs(model, Xs, U, B)
        dk = Fx @ dXs
        dk[:, :, n_x:n_x + n_u] += Fu
        dk[:, :, n_x + n_u:] += Fb
        return F, dk

    for _ in range(substeps):
        k1, K1 = stage(X, S)
        k2, K2 = stage(X + 0.5 * h * k1, S + 0.5 * h * K1)
        k3, K3 = stage(X + 0.5 * h * k2, S + 0.5 * h * K2)
        k4, K4 = stage(X + h * k3, S + h * K3)
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        S = S + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        _check_finite(X)
    _check_finite(S, "sensitivity")
    return X, S[:, :, :n_x], S[:, :, n_x:n_x + n_u], S[:, :, n_x + n_u:]


def step(model: SwitchedModel, x, u, b, dt: float, substeps: int = 4) -> np.ndarray:
    """Advance one grid interval with ``substeps`` classical RK4 steps."""
    x, u = _check_xu(model, x, u)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != model.Q:
        raise ModelError(f"mode weights have length {b.size}, expected {model.Q}")
    return batch_step(model, x[None], u[None], b[None], dt, substeps)[0]


def step_with_sensitivities(model: SwitchedModel, x, u, b, dt: float, substeps: int = 4):
    """One interval plus ``d x_next / d(x, u, b)`` by differentiating the RK4 stages.

    Returns ``(x_next, d_x, d_u, d_b)``.
    """
    x, u = _check_xu(model, x, u)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != model.Q:
        raise ModelError(f"mode weights have length {b.size}, expected {model.Q}")
    xn, dx, du, db = batch_step_with_sensitivities(model, x[None], u[None], b[None], dt, substeps)
    return xn[0], dx[0], du[0], db[0]


def simulate(model: SwitchedModel, x0, inputs: Sequence, modes: Sequence, grid: GridSpec) -> np.ndarray:
    """Roll the plant forward over ``grid.N`` intervals; returns ``N+1`` states."""
    if model.n_u == 0 and (inputs is None or len(inputs) == 0):
        inputs = [np.zeros(0)] * len(modes)
    if len(inputs) != grid.N or len(modes) != grid.N:
        raise ModelError(f"simulate needs {grid.N} inputs and modes, got {len(inputs)} and {len(modes)}")
    x = np.asarray(x0, dtype=float).reshape(-1)
    out = [x]
    for u, b in zip(inputs, modes):
        x = step(model, x, u, b, grid.dt, grid.substeps)
        out.append(x)
    return np.array(out)


def rk4_matrix(A, dt: float, substeps: int = 4) -> np.ndarray:
    """Transition matrix of ``substeps`` RK4 steps on ``x' = A x``."""
    A = np.asarray(A, dtype=float)
    hA = (dt / substeps) * A
    term = np.eye(A.shape[0])
    T = term.copy()
    for k in range(1, 5):
        term = term @ hA / k
        T = T + term
    return np.linalg.matrix_power(T, substeps)
