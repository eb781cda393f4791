"""Dense convex QP solver (Goldfarb-Idnani dual active-set method).

Solves::

    min  0.5 z' H z + g' z
    s.t. A_eq z  = b_eq
         A_in z <= b_in

for a symmetric positive definite ``H``.  The dual method starts from the
unconstrained minimizer and adds violated constraints one at a time, so no
feasible starting point is needed.  The factorization ``J = L^{-T} Q`` is
updated with Householder reflections on insertion and Givens rotations on
deletion.  The iteration itself is compiled with numba.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import solve_triangular

__all__ = ["QpResult", "QpError", "solve_qp"]


class QpError(ValueError):
    """Raised when the Hessian is not positive definite or shapes disagree."""


@dataclass
class QpResult:
    z: np.ndarray
    status: str  # "optimal" | "infeasible" | "max-iter"
    lam_eq: np.ndarray
    lam_in: np.ndarray
    iterations: int
    active: list

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _as2d(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return np.zeros((0, n))
    return A


def solve_qp(H, g, A_eq=None, b_eq=None, A_in=None, b_in=None,
             tol: float = 1e-10, max_iter: int | None = None) -> QpResult:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    A_eq = _as2d(A_eq, n)
    A_in = _as2d(A_in, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float).ravel()
    if H.shape != (n, n) or A_eq.shape[1] != n or A_in.shape[1] != n:
        raise QpError("inconsistent QP dimensions")
    if A_eq.shape[0] != b_eq.size or A_in.shape[0] != b_in.size:
        raise QpError("constraint row count does not match right-hand side")
    m_eq, m_in = b_eq.size, b_in.size

    # Internally every constraint reads  n_i' z >= c_i.  Rows are scaled to unit norm.
    norm_eq = np.linalg.norm(A_eq, axis=1)
    norm_in = np.linalg.norm(A_in, axis=1)
    zero_in = norm_in == 0.0
    if np.any(zero_in & (b_in < -tol)):
        return QpResult(np.zeros(n), "infeasible", np.zeros(m_eq), np.zeros(m_in), 0, [])
    norm_eq[norm_eq == 0.0] = 1.0
    norm_in[zero_in] = 1.0
    N_eq = A_eq / norm_eq[:, None]
    c_eq = b_eq / norm_eq
    N_in = -A_in / norm_in[:, None]
    c_in = -b_in / norm_in
    keep_in = ~zero_in

    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise QpError("Hessian is not positive definite") from exc
    J = np.ascontiguousarray(solve_triangular(L, np.eye(n), lower=True).T)  # L^{-T}
    Nmat = np.ascontiguousarray(np.vstack([N_eq, N_in]))
    c = np.concatenate([c_eq, c_in])
    keep = np.concatenate([np.ones(m_eq, dtype=bool), keep_in])
    max_iter = max_iter if max_iter is not None else 10 * (n + m_eq + m_in) + 50
    z, u, act, sgn, q, code, iters = _gi_kernel(J, np.ascontiguousarray(g), Nmat, c, m_eq, keep,
                                                float(tol), int(max_iter))
    status = ("optimal", "infeasible", "max-iter")[code]
    return _result(z, status, list(act[:q]), list(sgn[:q]), u[:q], m_eq, m_in, norm_eq, norm_in, iters)


@njit(cache=True)
def _gi_kernel(J, g, Nmat, c, m_eq, keep, tol, max_iter):
    """Goldfarb-Idnani iterations on rows ``Nmat z >= c`` (the first ``m_eq`` are equalities).

    ``J`` holds ``L^{-T}`` for ``H = L L'`` on entry and is overwritten.
    Returns ``(z, u, active, signs, q, code, iters)`` with code 0 optimal,
    1 infeasible, 2 iteration limit.
    """
    n = g.size
    m = c.size
    # unconstrained minimizer -J J' g
    Jg = J.T @ g
    z = -(J @ Jg)
    R = np.zeros((n, n))
    act = np.empty(n, dtype=np.int64)
    sgn = np.empty(n)
    u = np.zeros(n + 1)
    up = np.zeros(n + 1)
    is_act = np.zeros(m, dtype=np.bool_)
    d = np.empty(n)
    zdir = np.empty(n)
    r = np.empty(n)
    v = np.empty(n)
    q = 0
    iters = 0
    eq_next = 0
    while True:
        if eq_next < m_eq:
            p = eq_next
            eq_next += 1
            s = Nmat[p] @ z - c[p]
            sign = 1.0
            if s > 0.0:
                sign = -1.0
                s = -s
        else:
            p = -1
            best = 0.0
            for j in range(m_eq, m):
                if is_act[j] or not keep[j]:
                    continue
                sj = Nmat[j] @ z - c[j]
                if sj < -tol * (1.0 + abs(c[j])) and (p < 0 or sj < best):
                    best = sj
                    p = j
            if p < 0:
                break
            s = best
            sign = 1.0
        cp = sign * c[p]
        for i in range(q):
            up[i] = u[i]
        up[q] = 0.0

        while True:
            iters += 1
            if iters > max_iter:
                return z, u, act, sgn, q, 2, iters
            # d = J' n_p
            for i in range(n):
                acc = 0.0
                for k in range(n):
                    acc += J[k, i] * Nmat[p, k]
                d[i] = sign * acc
            # primal direction from the free part of J
            znorm2 = 0.0
            zn = 0.0
            for k in range(n):
                acc = 0.0
                for i in range(q, n):
                    acc += J[k, i] * d[i]
                zdir[k] = acc
                znorm2 += acc * acc
                zn += acc * sign * Nmat[p, k]
            # dual direction: R r = d[:q]
            for i in range(q - 1, -1, -1):
                acc = d[i]
                for k in range(i + 1, q):
                    acc -= R[i, k] * r[k]
                r[i] = acc / R[i, i]
            t1 = np.inf
            kdrop = -1
            for i in range(q):
                if r[i] > tol and act[i] >= m_eq:
                    ratio = up[i] / r[i]
                    if ratio < t1:
                        t1 = ratio
                        kdrop = i
            if np.sqrt(znorm2) <= tol or zn <= tol * tol:
                t2 = np.inf
            else:
                t2 = max(-s / zn, 0.0)
            t = min(t1, t2)
            if not np.isfinite(t):
                if abs(s) <= tol * (1.0 + abs(cp)):
                    break  # dependent row that already holds
                return z, u, act, sgn, q, 1, iters
            if np.isfinite(t2):
                for k in range(n):
                    z[k] += t * zdir[k]
            for i in range(q):
                up[i] -= t * r[i]
            up[q] += t
            if np.isfinite(t2) and t == t2:
                # add constraint p: Householder on the trailing columns of J
                alpha = 0.0
                for i in range(q, n):
                    alpha += d[i] * d[i]
                alpha = np.sqrt(alpha)
                if q < n - 1 and alpha > 0.0:
                    beta = -alpha if d[q] >= 0.0 else alpha
                    vv = 0.0
                    for i in range(q, n):
                        v[i] = d[i]
                    v[q] -= beta
                    for i in range(q, n):
                        vv += v[i] * v[i]
                    if vv > 0.0:
                        f = 2.0 / vv
                        for k in range(n):
                            acc = 0.0
                            for i in range(q, n):
                                acc += J[k, i] * v[i]
                            acc *= f
                            for i in range(q, n):
                                J[k, i] -= acc * v[i]
                    dq = beta
                else:
                    dq = d[q] if q < n else 0.0
                for i in range(q):
                    R[i, q] = d[i]
                R[q, q] = dq
                act[q] = p
                sgn[q] = sign
                is_act[p] = True
                for i in range(q + 1):
                    u[i] = up[i]
                q += 1
                break
            # drop constraint kdrop: shift columns of R, restore with Givens
            is_act[act[kdrop]] = False
            for col in range(kdrop, q - 1):
                for i in range(n):
                    R[i, col] = R[i, col + 1]
                act[col] = act[col + 1]
                sgn[col] = sgn[col + 1]
                up[col] = up[col + 1]
            up[q - 1] = up[q]
            for i in range(n):
                R[i, q - 1] = 0.0
            for i in range(kdrop, q - 1):
                a = R[i, i]
                b = R[i + 1, i]
                if b == 0.0:
                    continue
                rho = np.hypot(a, b)
                cs = a / rho
                sn = b / rho
                for k in range(i, q - 1):
                    ri = R[i, k]
                    rj = R[i + 1, k]
                    R[i, k] = cs * ri + sn * rj
                    R[i + 1, k] = -sn * ri + cs * rj
                for k in range(n):
                    ji = J[k, i]
                    jj = J[k, i + 1]
                    J[k, i] = cs * ji + sn * jj
                    J[k, i + 1] = -sn * ji + cs * jj
            for k in range(n):
                R[q - 1, k] = 0.0
            q -= 1
            s = 0.0
            for k in range(n):
                s += Nmat[p, k] * z[k]
            s = sign * s - cp
    return z, u, act, sgn, q, 0, iters


def _result(z, status, active, signs, u, m_eq, m_in, norm_eq, norm_in, iters):
    lam_eq = np.zeros(m_eq)
    lam_in = np.zeros(m_in)
    for idx, sign, mult in zip(active, signs, u):
        if idx < m_eq:
            # n'z >= c with multiplier u  <=>  A z = b, Lagrangian term -sign*u*(a'z - b)
            lam_eq[idx] = -sign * mult / norm_eq[idx]
        else:
            lam_in[idx - m_eq] = mult / norm_in[idx - m_eq]
    return QpResult(z, status, lam_eq, lam_in, iters, [int(a) for a in active])
