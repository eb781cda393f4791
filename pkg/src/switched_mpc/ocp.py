"""Move-blocked multiple-shooting OCP and its SQP solver.

The decision variables are the shooting states ``x_0..x_N``, the inputs
``u_0..u_{N-1}`` and one mode-weight row per block.  Each SQP iteration
linearizes the shooting constraints with RK4 sensitivities, eliminates the
state increments (condensing) and solves a dense QP in the inputs, the free
mode blocks and, when softened, one slack per state-box/path row.  Steps are
globalized with an l1 merit line search.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .integrator import GridSpec, batch_step, batch_step_with_sensitivities, simulate
from .model import ModelError, SwitchedModel, is_binary
from .plan import ModePlan, block_layout
from .qp import QpError, solve_qp

__all__ = [
    "SolverOptions",
    "BlockedOcp",
    "OcpSolution",
    "ModePlan",
    "build",
    "solve_relaxed",
    "solve_fixed",
    "evaluate_trajectory",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    tol_kkt: float = 1e-6
    tol_feas: float = 1e-6
    max_iter: int = 100
    rho: float = 1e4
    soften: bool = False
    substeps: int = 4
    hessian_reg: float = 1e-8
    # "gauss-newton", or "bfgs": damped BFGS updates seeded with the Gauss-Newton matrix
    hessian: str = "gauss-newton"
    slack_reg: float = 1e-4
    ls_beta: float = 0.5
    ls_min_step: float = 1e-8
    armijo: float = 1e-4
    # closed loop only: also solve NLP #1 from the cold initial guess and keep the better
    cold_restart: bool = False
    # closed loop only: also seed NLP #2 from the current NLP #1 solution and keep the better
    dual_seed: bool = False


@dataclass(frozen=True)
class BlockedOcp:
    """``P(h, b_act)``: a horizon of ``h + (M-1) l`` intervals split into ``M`` mode blocks."""

    model: SwitchedModel
    grid: GridSpec
    l: int
    h: int
    M: int
    x0: np.ndarray
    fixed_first_block: Optional[np.ndarray] = None
    terminal_set: Optional[object] = None
    mode_domain: str = "relaxed"

    @property
    def lengths(self) -> np.ndarray:
        return np.array([self.h] + [self.l] * (self.M - 1), dtype=int)

    @property
    def N(self) -> int:
        """Effective horizon length in intervals."""
        return self.h + (self.M - 1) * self.l

    @property
    def block_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.M), self.lengths)

    def plan(self, blocks) -> ModePlan:
        return ModePlan(blocks, self.l, self.h, self.grid.dt)


@dataclass
class OcpSolution:
    states: np.ndarray
    inputs: np.ndarray
    mode_blocks: ModePlan
    objective: float  # minimized objective, including any l1 penalty
    cost: float  # objective without penalty
    kkt_residual: float
    constraint_violation: float
    status: str  # "converged" | "max-iter" | "infeasible"
    iterations: int = 0
    qp_iterations: int = 0
    solve_time: float = 0.0
    # False only when no usable iterate exists (QP infeasible even after softening)
    usable: bool = True
    max_gap: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def build(model: SwitchedModel, grid: GridSpec, l: int, h: Optional[int] = None, b_act=None,
          x0=None, terminal_set=None) -> BlockedOcp:
    """Set up ``P(h, b_act)`` on the nominal grid ``grid`` (``grid.N`` must be a multiple of ``l``)."""
    M, _ = block_layout(grid.N, l, h)
    h = l if h is None else int(h)
    if x0 is None:
        raise ModelError("build needs an initial state")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != model.n_x:
        raise ModelError(f"initial state has length {x0.size}, expected {model.n_x}")
    fixed = None
    if b_act is not None:
        fixed = np.asarray(b_act, dtype=float).reshape(-1)
        if fixed.size != model.Q or not is_binary(fixed):
            raise ModelError(f"the fixed first block must be a binary mode vector, got {fixed}")
    if terminal_set is None:
        terminal_set = model.terminal_set
    return BlockedOcp(model, grid, int(l), h, M, x0, fixed, terminal_set)


# ---------------------------------------------------------------------------
# cost and constraint evaluation


def _running_costs(model, X, U):
    """Per-mode running costs, shape ``(K, Q)``."""
    if model.vectorized:
        return np.stack([np.asarray(L(X, U), dtype=float).reshape(-1) for L in model.running_cost], axis=1)
    return np.array([[float(L(x, u)) for L in model.running_cost] for x, u in zip(X, U)])


def _fd_cost_derivs(fn, x, u, eps=1e-5):
    z = np.concatenate([x, u])
    n = z.size
    nx = x.size

    def f(zz):
        return float(fn(zz[:nx], zz[nx:]))

    g = np.empty(n)
    H = np.empty((n, n))
    E = np.eye(n) * eps
    f0 = f(z)
    for i in range(n):
        g[i] = (f(z + E[i]) - f(z - E[i])) / (2 * eps)
        for j in range(i, n):
            H[i, j] = H[j, i] = (f(z + E[i] + E[j]) - f(z + E[i] - E[j])
                                 - f(z - E[i] + E[j]) + f(z - E[i] - E[j])) / (4 * eps * eps)
    del f0
    return g[:nx], g[nx:], H


def _running_derivs(model, j, X, U):
    """Stacked ``(gx, gu, hess)`` of ``L_j``."""
    K = X.shape[0]
    if model.running_cost_derivs is not None:
        d = model.running_cost_derivs[j]
        if model.vectorized:
            gx, gu, H = d(X, U)
            return (np.asarray(gx, dtype=float).reshape(K, model.n_x),
                    np.asarray(gu, dtype=float).reshape(K, model.n_u),
                    np.asarray(H, dtype=float).reshape(K, model.n_x + model.n_u, model.n_x + model.n_u))
        parts = [d(x, u) for x, u in zip(X, U)]
    else:
        parts = [_fd_cost_derivs(model.running_cost[j], x, u) for x, u in zip(X, U)]
    gx = np.array([np.asarray(p[0], dtype=float).reshape(model.n_x) for p in parts])
    gu = np.array([np.asarray(p[1], dtype=float).reshape(model.n_u) for p in parts])
    H = np.array([np.asarray(p[2], dtype=float) for p in parts])
    return gx, gu, H


def _terminal_derivs(model, x):
    if model.terminal_cost_derivs is not None:
        g, H = model.terminal_cost_derivs(x)
        return np.asarray(g, dtype=float), np.asarray(H, dtype=float)
    gx, _, H = _fd_cost_derivs(lambda xx, uu: model.terminal_cost(xx), x, np.zeros(0))
    return gx, H


def _path(model, X, U):
    if model.path_constraints is None or model.n_path == 0:
        return np.zeros((X.shape[0], 0))
    if model.vectorized:
        return np.asarray(model.path_constraints(X, U), dtype=float).reshape(X.shape[0], -1)
    return np.array([model.path(x, u) for x, u in zip(X, U)])


def _path_jac(model, X, U):
    K = X.shape[0]
    c = model.n_path
    if model.path_jac is not None:
        if model.vectorized:
            gx, gu = model.path_jac(X, U)
            return np.asarray(gx, dtype=float), np.asarray(gu, dtype=float).reshape(K, c, model.n_u)
        pairs = [model.path_jac(x, u) for x, u in zip(X, U)]
        return (np.array([np.asarray(p[0], dtype=float) for p in pairs]),
                np.array([np.asarray(p[1], dtype=float).reshape(c, model.n_u) for p in pairs]))
    from .integrator import _fd_jac
    return _fd_jac(model, model.path_constraints, X, U)


def _psd(H):
    """Project stacked symmetric matrices onto the PSD cone."""
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    w, V = np.linalg.eigh(H)
    if np.all(w >= 0.0):
        return H
    w = np.maximum(w, 0.0)
    return (V * w[..., None, :]) @ np.swapaxes(V, -1, -2)


@dataclass
class _Eval:
    cost: float
    gaps: np.ndarray
    box_viol: np.ndarray  # (N, n_x) positive parts for x_1..x_N
    path_viol: np.ndarray  # (N, c) positive parts
    term_viol: np.ndarray
    simplex_viol: float


def _eq_rows(nf, n_w, free_ids, pcol):
    A = np.zeros((nf, n_w))
    for i, m in enumerate(free_ids):
        A[i, pcol(m)] = 1.0
    return A


def _damped_bfgs(B, s, y):
    """Powell-damped BFGS update; keeps ``B`` positive definite."""
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 1e-16:
        return B
    sy = float(s @ y)
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
    return 0.5 * (B + B.T)


def _kkt_measure(lam_in, lam_eq, gw0, A_lin, b_lin, A_eq_w, n_s, rho):
    """Scaled first-order residual of the current iterate for given multipliers.

    Stationarity of the condensed Lagrangian and complementarity of the
    linearized rows (and of the l1 slacks when softened), divided by
    ``1 + max |lambda|``.  Any nonnegative multipliers that make this small
    certify an approximate KKT point; the caller passes those of the previous
    QP, which are optimal for the step that led here.
    """
    n_lin = A_lin.shape[0]
    lam = lam_in[:n_lin]
    stat = gw0 + A_lin.T @ lam + A_eq_w.T @ lam_eq
    comp = lam * np.maximum(b_lin, 0.0)
    parts = [np.max(np.abs(stat), initial=0.0), np.max(np.abs(comp), initial=0.0)]
    if n_s:
        b_soft = b_lin[n_lin - n_s:]
        lam_soft = lam[n_lin - n_s:]
        mu = lam_in[n_lin:n_lin + n_s]
        parts.append(np.max(np.abs(rho - lam_soft - mu)))
        parts.append(np.max(mu * np.maximum(-b_soft, 0.0)))
    scale = 1.0 + max(np.max(np.abs(lam_in), initial=0.0), np.max(np.abs(lam_eq), initial=0.0))
    return float(max(parts) / scale)


def _evaluate(ocp: BlockedOcp, X, U, P, opts) -> _Eval:
    model = ocp.model
    N = ocp.N
    B = P[ocp.block_index]
    Xn = batch_step(model, X[:-1], U, B, ocp.grid.dt, opts.substeps)
    gaps = Xn - X[1:]
    L = _running_costs(model, X[:-1], U)
    cost = float(np.sum(B * L)) + float(model.terminal_cost(X[N]))
    box = np.maximum(X[1:] - model.state_ub, 0.0) + np.maximum(model.state_lb - X[1:], 0.0)
    g = _path(model, X[:-1], U)
    path = np.maximum(g, 0.0)
    term = np.zeros(0)
    if ocp.terminal_set is not None:
        term = np.maximum(ocp.terminal_set.C @ X[N] - ocp.terminal_set.d, 0.0)
    simplex = float(max(np.max(np.abs(P.sum(axis=1) - 1.0)), np.max(np.maximum(-P, 0.0)),
                        np.max(np.maximum(P - 1.0, 0.0))))
    return _Eval(cost, gaps, box, path, term, simplex)


def _max_violation(ev: _Eval) -> float:
    parts = [np.max(np.abs(ev.gaps), initial=0.0), np.max(ev.box_viol, initial=0.0),
             np.max(ev.path_viol, initial=0.0), np.max(ev.term_viol, initial=0.0), ev.simplex_viol]
    return float(max(parts))


def _merit_parts(ev: _Eval, soften: bool):
    soft = 0.0
    hard = float(np.sum(np.abs(ev.gaps)) + np.sum(ev.term_viol))
    ineq = float(np.sum(ev.box_viol) + np.sum(ev.path_viol))
    if soften:
        soft = ineq
    else:
        hard += ineq
    return soft, hard


def evaluate_trajectory(ocp: BlockedOcp, states, inputs, blocks, opts: SolverOptions = SolverOptions()):
    """Cost and maximum constraint violation of a given trajectory."""
    X = np.asarray(states, dtype=float)
    U = np.asarray(inputs, dtype=float).reshape(ocp.N, ocp.model.n_u)
    ev = _evaluate(ocp, X, U, np.asarray(blocks, dtype=float), opts)
    return ev.cost, _max_violation(ev)


# ---------------------------------------------------------------------------
# SQP


def _initial_guess(ocp: BlockedOcp, P_fixed, free, warm_start):
    model = ocp.model
    N, M, Q = ocp.N, ocp.M, model.Q
    X = np.tile(ocp.x0, (N + 1, 1))
    U = np.clip(np.zeros((N, model.n_u)), model.input_lb, model.input_ub)
    P = np.array(P_fixed, dtype=float)
    P[free] = 1.0 / Q
    if warm_start is not None:
        ws_X = np.asarray(warm_start.states)
        ws_U = np.asarray(warm_start.inputs)
        ws_P = np.asarray(warm_start.mode_blocks.blocks if isinstance(warm_start, OcpSolution)
                          else warm_start.mode_blocks)
        if ws_X.shape == X.shape:
            X = ws_X.astype(float).copy()
        if ws_U.shape == U.shape:
            U = np.clip(ws_U.astype(float), model.input_lb, model.input_ub)
        if ws_P.shape == P.shape:
            P[free] = np.clip(ws_P[free], 0.0, 1.0)
            P[free] /= P[free].sum(axis=1, keepdims=True)
    X[0] = ocp.x0
    return X, U, P


def _sqp(ocp: BlockedOcp, P_fixed: np.ndarray, free: np.ndarray, warm_start, opts: SolverOptions,
         kind: str) -> OcpSolution:
    t_start = time.perf_counter()
    model = ocp.model
    N, M, Q, n_x, n_u = ocp.N, ocp.M, model.Q, model.n_x, model.n_u
    dt = ocp.grid.dt
    blk = ocp.block_index
    free = np.asarray(free, dtype=bool)
    free_ids = np.flatnonzero(free)
    nf = free_ids.size
    pos_of_block = -np.ones(M, dtype=int)
    pos_of_block[free_ids] = np.arange(nf)
    n_w = N * n_u + nf * Q
    ucol = lambda k: slice(k * n_u, (k + 1) * n_u)  # noqa: E731
    pcol = lambda m: slice(N * n_u + pos_of_block[m] * Q, N * n_u + (pos_of_block[m] + 1) * Q)  # noqa: E731

    X, U, P = _initial_guess(ocp, P_fixed, free, warm_start)

    lb_fin = np.isfinite(model.state_lb)
    ub_fin = np.isfinite(model.state_ub)
    ulb_fin = np.isfinite(model.input_lb)
    uub_fin = np.isfinite(model.input_ub)
    Tset = ocp.terminal_set

    nu = 1.0
    B_w = None
    s_prev = grad_prev = lam_prev = lam_full = None
    status = "max-iter"
    usable = True
    kkt = np.inf
    qp_iters = 0
    it = 0
    ev = _evaluate(ocp, X, U, P, opts)

    if n_w == 0:
        # nothing to optimize: the trajectory is fixed by the plan
        B = P[blk]
        X = simulate(model, ocp.x0, U, B, GridSpec(N, dt, opts.substeps))
        ev = _evaluate(ocp, X, U, P, opts)
        viol = _max_violation(ev)
        soft, _ = _merit_parts(ev, opts.soften)
        status = "converged" if viol <= opts.tol_feas else "infeasible"
        return OcpSolution(X, U, ocp.plan(P), ev.cost + opts.rho * soft if opts.soften else ev.cost,
                           ev.cost, 0.0, viol, status, 0, 0, time.perf_counter() - t_start, True,
                           float(np.max(np.abs(ev.gaps), initial=0.0)))

    for it in range(1, opts.max_iter + 1):
        B = P[blk]
        Xn, Ax, Bu, Db = batch_step_with_sensitivities(model, X[:-1], U, B, dt, opts.substeps)
        gaps = Xn - X[1:]

        # objective derivatives
        L = _running_costs(model, X[:-1], U)
        gx = np.zeros((N, n_x))
        gu = np.zeros((N, n_u))
        Hs = np.zeros((N, n_x + n_u, n_x + n_u))
        for j in range(Q):
            w = B[:, j]
            if np.any(w != 0.0):
                gxj, guj, Hj = _running_derivs(model, j, X[:-1], U)
                gx += w[:, None] * gxj
                gu += w[:, None] * guj
                Hs += w[:, None, None] * Hj
        Hs = _psd(Hs)
        gN, HN = _terminal_derivs(model, X[N])
        HN = _psd(HN)
        gP = np.zeros((M, Q))
        np.add.at(gP, blk, L)

        # condensing: dx_k = c[k] + S[k] w
        S = np.zeros((N + 1, n_x, n_w))
        c = np.zeros((N + 1, n_x))
        for k in range(N):
            S[k + 1] = Ax[k] @ S[k]
            if n_u:
                S[k + 1][:, ucol(k)] += Bu[k]
            if free[blk[k]]:
                S[k + 1][:, pcol(blk[k])] += Db[k]
            c[k + 1] = Ax[k] @ c[k] + gaps[k]

        Hxx = Hs[:, :n_x, :n_x]
        Hxu = Hs[:, :n_x, n_x:]
        Huu = Hs[:, n_x:, n_x:]
        HS = Hxx @ S[:N]
        Hw = np.tensordot(S[:N], HS, axes=([0, 1], [0, 1]))
        Hw += S[N].T @ HN @ S[N]
        gw = np.tensordot(S[:N], gx + np.einsum("kab,kb->ka", Hxx, c[:N]), axes=([0, 1], [0, 1]))
        gw += S[N].T @ (gN + HN @ c[N])
        gw0 = np.tensordot(S[:N], gx, axes=([0, 1], [0, 1])) + S[N].T @ gN
        if n_u:
            for k in range(N):
                cross = S[k].T @ Hxu[k]
                Hw[:, ucol(k)] += cross
                Hw[ucol(k), :] += cross.T
                Hw[ucol(k), ucol(k)] += Huu[k]
                gw[ucol(k)] += gu[k] + Hxu[k].T @ c[k]
                gw0[ucol(k)] += gu[k]
        for m in free_ids:
            gw[pcol(m)] += gP[m]
            gw0[pcol(m)] += gP[m]
        Hw = 0.5 * (Hw + Hw.T)

        # hard linear rows
        hard_A = []
        hard_b = []
        soft_A = []
        soft_b = []
        Pw = np.zeros((nf * Q, n_w))
        Pw[:, N * n_u:] = np.eye(nf * Q)
        hard_A += [-Pw, Pw]
        hard_b += [P[free_ids].ravel(), 1.0 - P[free_ids].ravel()]
        if n_u:
            Uw = np.zeros((N * n_u, n_w))
            Uw[:, :N * n_u] = np.eye(N * n_u)
            ucur = U.ravel()
            lbv = np.tile(model.input_lb, N)
            ubv = np.tile(model.input_ub, N)
            mlb = np.tile(ulb_fin, N)
            mub = np.tile(uub_fin, N)
            hard_A += [-Uw[mlb], Uw[mub]]
            hard_b += [(ucur - lbv)[mlb], (ubv - ucur)[mub]]
        # state box on x_1..x_N
        Sx = S[1:]
        xc = X[1:] + c[1:]
        box_A = [Sx[:, ub_fin, :].reshape(-1, n_w), -Sx[:, lb_fin, :].reshape(-1, n_w)]
        box_b = [(model.state_ub[ub_fin] - xc[:, ub_fin]).ravel(),
                 (xc[:, lb_fin] - model.state_lb[lb_fin]).ravel()]
        # path constraints on k = 0..N-1
        if model.n_path:
            gval = _path(model, X[:-1], U)
            Gx, Gu = _path_jac(model, X[:-1], U)
            GA = Gx @ S[:N]
            if n_u:
                for k in range(N):
                    GA[k][:, ucol(k)] += Gu[k]
            box_A.append(GA.reshape(-1, n_w))
            box_b.append((-gval - np.einsum("kca,ka->kc", Gx, c[:N])).ravel())
        if opts.soften:
            soft_A += box_A
            soft_b += box_b
        else:
            hard_A += box_A
            hard_b += box_b
        if Tset is not None:
            hard_A.append(Tset.C @ S[N])
            hard_b.append(Tset.d - Tset.C @ (X[N] + c[N]))

        A_hard = np.vstack(hard_A) if hard_A else np.zeros((0, n_w))
        b_hard = np.concatenate(hard_b) if hard_b else np.zeros(0)
        A_soft = np.vstack(soft_A) if soft_A else np.zeros((0, n_w))
        b_soft = np.concatenate(soft_b) if soft_b else np.zeros(0)
        n_s = A_soft.shape[0]
        A_lin = np.vstack([A_hard, A_soft])

        # Gauss-Newton has no curvature in the mode weights, where the optimum
        # is often interior; a damped BFGS update supplies it
        if opts.hessian == "gauss-newton" or B_w is None:
            B_w = Hw
        elif s_prev is not None:
            grad_new = (gw0 + A_lin.T @ lam_prev[0]
                        + _eq_rows(nf, n_w, free_ids, pcol).T @ lam_prev[1])
            y_ = grad_new - grad_prev
            log.debug("bfgs s'y=%.3e s'Bs=%.3e |s|=%.2e eig=%s", s_prev @ y_, s_prev @ B_w @ s_prev,
                      np.linalg.norm(s_prev), np.linalg.eigvalsh(B_w)[[0, -1]])
            B_w = _damped_bfgs(B_w, s_prev, y_)

        A_eq = np.zeros((nf, n_w + n_s))
        for i, m in enumerate(free_ids):
            A_eq[i, pcol(m)] = 1.0
        b_eq = 1.0 - P[free_ids].sum(axis=1)

        # first-order test at the current point, certified by the last QP's multipliers
        gap_inf = float(np.max(np.abs(ev.gaps), initial=0.0))
        hard_ok = gap_inf <= opts.tol_feas and (opts.soften or _max_violation(ev) <= opts.tol_feas)
        if lam_full is not None:
            kkt = _kkt_measure(lam_full[0], lam_full[1], gw0, A_lin, np.concatenate([b_hard, b_soft]),
                               A_eq[:, :n_w], n_s, opts.rho)
            if kkt <= opts.tol_kkt and hard_ok:
                viol = _max_violation(ev)
                status = "converged" if viol <= opts.tol_feas else "infeasible"
                log.debug("%s first-order point at iteration %d (kkt %.2e)", kind, it, kkt)
                break

        H = np.zeros((n_w + n_s, n_w + n_s))
        H[:n_w, :n_w] = B_w
        H[n_w:, n_w:] = opts.slack_reg * np.eye(n_s)
        g = np.concatenate([gw, opts.rho * np.ones(n_s)])
        A_in = np.vstack([
            np.hstack([A_hard, np.zeros((A_hard.shape[0], n_s))]),
            np.hstack([A_soft, -np.eye(n_s)]),
            np.hstack([np.zeros((n_s, n_w)), -np.eye(n_s)]),
        ])
        b_in = np.concatenate([b_hard, b_soft, np.zeros(n_s)])

        qp = None
        reg = opts.hessian_reg
        for _ in range(12):
            try:
                H_try = H.copy()
                H_try[:n_w, :n_w] += reg * np.eye(n_w)
                qp = solve_qp(H_try, g, A_eq, b_eq, A_in, b_in)
                break
            except QpError:
                reg *= 10.0
        if qp is None:
            raise ArithmeticError("QP Hessian could not be regularized to positive definite")
        qp_iters += qp.iterations
        if qp.status != "optimal":
            status = "infeasible"
            usable = it > 1 and _max_violation(ev) <= opts.tol_feas if not opts.soften else it > 1
            log.debug("%s QP %s at SQP iteration %d", kind, qp.status, it)
            break

        w = qp.z[:n_w]
        sig = qp.z[n_w:]
        dU = w[:N * n_u].reshape(N, n_u)
        dP = np.zeros_like(P)
        dP[free_ids] = w[N * n_u:].reshape(nf, Q)
        dX = c + S @ w
        step_norm = float(max(np.max(np.abs(dU), initial=0.0), np.max(np.abs(dP), initial=0.0),
                              np.max(np.abs(dX), initial=0.0)))
        soft0, hard0 = _merit_parts(ev, opts.soften)
        # directional derivative of the cost along the full step
        grad_dot = float(np.sum(gx * dX[:N]) + np.sum(gu * dU) + gN @ dX[N] + np.sum(gP * dP))
        soft_change = opts.rho * (float(np.sum(sig)) - soft0) if opts.soften else 0.0
        curv = float(w @ B_w @ w)
        if hard0 > 1e-12:
            nu_req = (grad_dot + soft_change + 0.5 * curv) / (0.5 * hard0)
            if nu_req > nu:
                nu = nu_req + 1.0
        D = grad_dot + soft_change - nu * hard0

        def merit(e):
            s, hd = _merit_parts(e, opts.soften)
            return e.cost + opts.rho * s + nu * hd

        phi0 = merit(ev)
        alpha = 1.0
        while True:
            Xt = X + alpha * dX
            Ut = U + alpha * dU
            Pt = P + alpha * dP
            Xt[0] = ocp.x0
            target = phi0 + opts.armijo * alpha * min(D, 0.0) + 1e-14 * abs(phi0)
            try:
                evt = _evaluate(ocp, Xt, Ut, Pt, opts)
                ok = merit(evt) <= target
            except ArithmeticError:
                ok = False
            if not ok and alpha == 1.0:
                # second-order correction: close the shooting gaps of the trial
                # controls by forward simulation
                try:
                    Xs = simulate(model, ocp.x0, Ut, Pt[blk], GridSpec(N, dt, opts.substeps))
                    evs = _evaluate(ocp, Xs, Ut, Pt, opts)
                    if merit(evs) <= target:
                        Xt, evt, ok = Xs, evs, True
                except ArithmeticError:
                    pass
            if ok or alpha * opts.ls_beta < opts.ls_min_step:
                if not ok:
                    log.debug("%s line search stalled at iteration %d", kind, it)
                break
            alpha *= opts.ls_beta
        if ok:
            if nf and np.max(np.abs(Pt[free_ids].sum(axis=1) - 1.0)) > 1e-12:
                # wipe out round-off drift off the simplex
                Pt = Pt.copy()
                Pt[free_ids] = np.clip(Pt[free_ids], 0.0, None)
                Pt[free_ids] /= Pt[free_ids].sum(axis=1, keepdims=True)
                evt = _evaluate(ocp, Xt, Ut, Pt, opts)
            X, U, P, ev = Xt, Ut, Pt, evt
            n_lin = A_lin.shape[0]
            lam_prev = (qp.lam_in[:n_lin], qp.lam_eq)
            lam_full = (qp.lam_in, qp.lam_eq)
            grad_prev = gw0 + A_lin.T @ lam_prev[0] + A_eq[:, :n_w].T @ lam_prev[1]
            s_prev = alpha * w
        else:
            s_prev = None
        viol = _max_violation(ev)
        log.debug("%s it=%d kkt=%.3e alpha=%.2e merit=%.10g nu=%.3g viol=%.3e qp_it=%d",
                  kind, it, kkt, alpha, merit(ev), nu, viol, qp.iterations)
        if ok and step_norm <= opts.tol_kkt and alpha == 1.0:
            kkt = min(kkt, step_norm)
            status = "converged" if viol <= opts.tol_feas else "infeasible"
            break
        if not ok:
            # no progress possible along the QP direction
            break

    viol = _max_violation(ev)
    soft, _ = _merit_parts(ev, opts.soften)
    objective = ev.cost + (opts.rho * soft if opts.soften else 0.0)
    return OcpSolution(X, U, ocp.plan(P), objective, ev.cost, kkt, viol, status, it, qp_iters,
                       time.perf_counter() - t_start, usable,
                       float(np.max(np.abs(ev.gaps), initial=0.0)))


def solve_relaxed(ocp: BlockedOcp, warm_start=None, opts: SolverOptions = SolverOptions()) -> OcpSolution:
    """NLP #1: mode blocks relaxed to the unit simplex (first block fixed when ``b_act`` is set)."""
    if ocp.mode_domain != "relaxed":
        raise ModelError("solve_relaxed needs a problem with relaxed mode domain")
    Q = ocp.model.Q
    P_fixed = np.zeros((ocp.M, Q))
    free = np.ones(ocp.M, dtype=bool)
    if ocp.fixed_first_block is not None:
        P_fixed[0] = ocp.fixed_first_block
        free[0] = False
    return _sqp(ocp, P_fixed, free, warm_start, opts, "NLP#1")


def solve_fixed(ocp: BlockedOcp, plan: ModePlan, warm_start=None,
                opts: SolverOptions = SolverOptions()) -> OcpSolution:
    """NLP #2: every mode block fixed to the binary ``plan``.

    For input-free models the trajectory is just a simulation of the plan.
    """
    blocks = plan.blocks if isinstance(plan, ModePlan) else np.asarray(plan, dtype=float)
    if blocks.shape != (ocp.M, ocp.model.Q):
        raise ModelError(f"plan has shape {blocks.shape}, expected {(ocp.M, ocp.model.Q)}")
    if isinstance(plan, ModePlan) and (plan.l != ocp.l or plan.h != ocp.h):
        raise ModelError("plan blocking does not match the problem")
    if not all(is_binary(r) for r in blocks):
        raise ModelError("solve_fixed needs a binary plan")
    if ocp.fixed_first_block is not None and not np.array_equal(blocks[0], ocp.fixed_first_block):
        raise ModelError("plan disagrees with the fixed first block")
    return _sqp(ocp, blocks, np.zeros(ocp.M, dtype=bool), warm_start, opts, "NLP#2")
