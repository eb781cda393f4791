"""Polytopes in H-representation and l-step switch-robust control-invariant sets.

For a switched linear system ``x+ = A_j x`` sampled on the MPC grid, a set
``S`` is l-SRCI when ``Ã_j S ⊆ S`` for every mode ``j`` with ``Ã_j = A_j^l``:
holding any single mode for a full dwell period keeps the state in ``S``.
:func:`compute_srci` finds such a set inside a state polytope by the
fixed-point iteration ``S <- S ∩ (∩_j Pre_l(S; j))``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .integrator import rk4_matrix
from .model import ModelError

__all__ = [
    "Polytope",
    "SwitchedLinearSystem",
    "LpResult",
    "lp_min",
    "pre_l",
    "intersect",
    "remove_redundancy",
    "contains",
    "equal",
    "is_empty",
    "compute_srci",
    "verify_srci",
    "SrciResult",
    "TOL",
]

log = logging.getLogger(__name__)

TOL = 1e-9
ROW_CAP = 5000


@dataclass(frozen=True)
class Polytope:
    """``{x : C x <= d}``; rows are scaled to unit norm on construction."""

    C: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.array(self.C, dtype=float))
        d = np.array(self.d, dtype=float).reshape(-1)
        if C.shape[0] != d.size:
            raise ModelError(f"polytope has {C.shape[0]} rows but {d.size} offsets")
        if not (np.all(np.isfinite(C)) and np.all(np.isfinite(d))):
            raise ModelError("polytope data must be finite")
        norms = np.linalg.norm(C, axis=1)
        zero = norms == 0.0
        # a zero row either always holds (drop it) or never does (keep 0 <= -1)
        bad = zero & (d < 0.0)
        keep = ~zero
        C2 = C[keep] / norms[keep, None]
        d2 = d[keep] / norms[keep]
        if np.any(bad):
            C2 = np.vstack([C2, np.zeros((1, C.shape[1]))])
            d2 = np.append(d2, -1.0)
        C2.setflags(write=False)
        d2.setflags(write=False)
        object.__setattr__(self, "C", C2)
        object.__setattr__(self, "d", d2)

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    @property
    def n_rows(self) -> int:
        return self.C.shape[0]

    @classmethod
    def box(cls, lb, ub) -> "Polytope":
        lb = np.asarray(lb, dtype=float)
        ub = np.asarray(ub, dtype=float)
        n = lb.size
        I = np.eye(n)
        return cls(np.vstack([I, -I]), np.concatenate([ub, -lb]))

    def contains_point(self, x, tol: float = TOL) -> bool:
        return bool(np.all(self.C @ np.asarray(x, dtype=float) <= self.d + tol))

    def contains_points(self, X, tol: float = TOL) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.all(X @ self.C.T <= self.d + tol, axis=1)

    def to_dict(self) -> dict:
        return {"C": self.C.tolist(), "d": self.d.tolist()}


@dataclass(frozen=True)
class SwitchedLinearSystem:
    """Modes ``x+ = A_j x`` (or ``(A_j + B_j K_j) x`` under a given feedback)."""

    A: tuple
    B: Optional[tuple] = None
    K: Optional[tuple] = None

    def __post_init__(self):
        A = tuple(np.array(a, dtype=float) for a in self.A)
        if len(A) < 1:
            raise ModelError("need at least one mode")
        n = A[0].shape[0]
        for a in A:
            if a.shape != (n, n):
                raise ModelError("mode matrices must all be square of the same size")
        object.__setattr__(self, "A", A)
        if self.B is not None:
            if self.K is None:
                raise ModelError("input matrices need feedback gains K")
            B = tuple(np.array(b, dtype=float).reshape(n, -1) for b in self.B)
            K = tuple(np.array(k, dtype=float).reshape(b.shape[1], n) for k, b in zip(self.K, B))
            if len(B) != len(A) or len(K) != len(A):
                raise ModelError("B and K need one entry per mode")
            object.__setattr__(self, "B", B)
            object.__setattr__(self, "K", K)
        elif self.K is not None:
            raise ModelError("feedback gains given without input matrices")

    @property
    def Q(self) -> int:
        return len(self.A)

    @property
    def n(self) -> int:
        return self.A[0].shape[0]

    def closed_loop(self, j: int) -> np.ndarray:
        if self.B is None:
            return self.A[j]
        return self.A[j] + self.B[j] @ self.K[j]

    def l_step(self, j: int, l: int) -> np.ndarray:
        return np.linalg.matrix_power(self.closed_loop(j), l)

    @classmethod
    def from_continuous(cls, A_cont: Sequence, dt: float, substeps: int = 4) -> "SwitchedLinearSystem":
        """Discretize ``x' = A_j x`` with the same RK4 map the OCP transcription uses."""
        return cls(tuple(rk4_matrix(a, dt, substeps) for a in A_cont))


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    value: float
    x: Optional[np.ndarray]


_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def lp_min(c, P: Polytope) -> LpResult:
    """Minimize ``c' x`` over ``P``."""
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.size != P.dim:
        raise ModelError(f"cost has length {c.size}, polytope dimension is {P.dim}")
    if P.n_rows == 0:
        if np.all(c == 0.0):
            return LpResult("optimal", 0.0, np.zeros(P.dim))
        return LpResult("unbounded", -np.inf, None)
    res = linprog(c, A_ub=P.C, b_ub=P.d, bounds=[(None, None)] * P.dim, method="highs", options=_HIGHS)
    if res.status == 0:
        return LpResult("optimal", float(res.fun), np.asarray(res.x))
    if res.status == 2:
        return LpResult("infeasible", np.inf, None)
    if res.status == 3:
        return LpResult("unbounded", -np.inf, None)
    raise ArithmeticError(f"LP solver failed: {res.message}")


def is_empty(P: Polytope) -> bool:
    return lp_min(np.zeros(P.dim), P).status == "infeasible"


def _support(P: Polytope, c) -> float:
    """``max c' x`` over ``P`` (``-inf`` when empty, ``inf`` when unbounded)."""
    r = lp_min(-np.asarray(c, dtype=float), P)
    if r.status == "infeasible":
        return -np.inf
    if r.status == "unbounded":
        return np.inf
    return -r.value


def remove_redundancy(P: Polytope, tol: float = TOL) -> Polytope:
    """Drop rows implied by the others; the set is unchanged."""
    if P.n_rows == 0 or is_empty(P):
        return P
    C, d = P.C, P.d
    # exact duplicates first (rows are normalized, so compare directly)
    key = np.round(np.hstack([C, d[:, None]]), 12)
    _, first = np.unique(key, axis=0, return_index=True)
    keep = np.zeros(len(d), dtype=bool)
    keep[np.sort(first)] = True
    # same direction, larger offset: dominated
    for i in np.flatnonzero(keep):
        same = keep & (np.abs(C @ C[i] - 1.0) <= 1e-12)
        if np.any(same & (d < d[i] - tol)):
            keep[i] = False
    for i in np.flatnonzero(keep):
        keep[i] = False
        rest = Polytope(C[keep], d[keep])
        if _support(rest, C[i]) > d[i] + tol:
            keep[i] = True
    return Polytope(C[keep], d[keep])


def intersect(P1: Polytope, P2: Polytope) -> Polytope:
    if P1.dim != P2.dim:
        raise ModelError("polytopes live in different dimensions")
    return remove_redundancy(Polytope(np.vstack([P1.C, P2.C]), np.concatenate([P1.d, P2.d])))


def contains(P1: Polytope, P2: Polytope, tol: float = TOL) -> bool:
    """True when ``P2 ⊆ P1``."""
    if P1.dim != P2.dim:
        raise ModelError("polytopes live in different dimensions")
    if is_empty(P2):
        return True
    return all(_support(P2, c) <= delta + tol for c, delta in zip(P1.C, P1.d))


def equal(P1: Polytope, P2: Polytope, tol: float = TOL) -> bool:
    return contains(P1, P2, tol) and contains(P2, P1, tol)


def pre_l(P: Polytope, sys: SwitchedLinearSystem, j: int, l: int) -> Polytope:
    """States that reach ``P`` after holding mode ``j`` for ``l`` steps."""
    if l < 1:
        raise ModelError("l must be >= 1")
    return Polytope(P.C @ sys.l_step(j, l), P.d)


@dataclass
class SrciResult:
    polytope: Polytope
    converged: bool
    iterations: int
    empty: bool = False
    history: list = field(default_factory=list)  # row counts per iterate


def compute_srci(X: Polytope, sys: SwitchedLinearSystem, l: int, max_iter: int = 200) -> SrciResult:
    """Largest l-SRCI subset of ``X`` by fixed-point iteration.

    Stops when an iterate equals its predecessor (mutual containment) or after
    ``max_iter`` updates; the last iterate is returned either way.
    """
    if l < 1 or max_iter < 1:
        raise ModelError("compute_srci needs l >= 1 and max_iter >= 1")
    if X.dim != sys.n:
        raise ModelError("state polytope and system dimensions differ")
    S = remove_redundancy(X)
    history = [S.n_rows]
    for it in range(1, max_iter + 1):
        nxt = S
        for j in range(sys.Q):
            nxt = Polytope(np.vstack([nxt.C, pre_l(S, sys, j, l).C]),
                           np.concatenate([nxt.d, pre_l(S, sys, j, l).d]))
        nxt = remove_redundancy(nxt)
        if nxt.n_rows > ROW_CAP:
            raise ArithmeticError(f"l-SRCI iterate exceeded {ROW_CAP} rows")
        history.append(nxt.n_rows)
        if is_empty(nxt):
            log.info("l-SRCI iteration reached the empty set after %d passes", it)
            return SrciResult(nxt, True, it, True, history)
        # iterates are nested by construction, so one inclusion settles equality
        if contains(nxt, S):
            return SrciResult(nxt, True, it, False, history)
        S = nxt
    return SrciResult(S, False, max_iter, False, history)


def verify_srci(Xf: Polytope, sys: SwitchedLinearSystem, l: int, samples: int = 1000,
                seed: int = 0, tol: float = 1e-7) -> bool:
    """Check ``Ã_j Xf ⊆ Xf`` for every mode, exactly by LP and by sampling."""
    if is_empty(Xf):
        log.warning("verify_srci called on an empty set; vacuously true")
        return True
    for j in range(sys.Q):
        if not contains(pre_l(Xf, sys, j, l), Xf, tol):
            return False
    if samples:
        pts = sample_points(Xf, samples, seed)
        for j in range(sys.Q):
            img = pts @ sys.l_step(j, l).T
            if not np.all(Xf.contains_points(img, tol)):
                return False
    return True


def sample_points(P: Polytope, n: int, seed: int = 0) -> np.ndarray:
    """Points of a bounded polytope by rejection from its bounding box."""
    rng = np.random.default_rng(seed)
    dim = P.dim
    lo = np.array([-_support(P, -e) for e in np.eye(dim)])
    hi = np.array([_support(P, e) for e in np.eye(dim)])
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ModelError("cannot sample an unbounded polytope")
    out = []
    tries = 0
    while sum(len(o) for o in out) < n and tries < 1000:
        cand = rng.uniform(lo, hi, size=(max(n, 256), dim))
        out.append(cand[P.contains_points(cand, 0.0)])
        tries += 1
    pts = np.vstack(out) if out else np.zeros((0, dim))
    return pts[:n]
