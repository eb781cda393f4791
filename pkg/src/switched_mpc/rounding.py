"""Block-wise sum-up rounding and its integer-approximation bound."""

from __future__ import annotations

import numpy as np

from .model import ModelError
from .plan import ModePlan

__all__ = ["sur_round", "max_integration_gap", "error_bound", "TIE_TOL"]

TIE_TOL = 1e-12


def sur_round(relaxed: ModePlan) -> ModePlan:
    """Round a relaxed plan to a binary one, block by block.

    At block ``m`` the mode with the largest accumulated deficit
    ``sum_{r<=m} w_r p_hat_r - sum_{r<m} w_r p_r`` wins (``w_r`` is the block
    length); ties within ``TIE_TOL`` go to the smallest mode index.
    """
    if not relaxed.on_simplex():
        raise ModelError("sum-up rounding needs every block on the unit simplex")
    P = relaxed.blocks
    # lengths in units of l; the common factor l*dt never changes the argmax
    w = (relaxed.lengths / relaxed.l).tolist()
    M, Q = P.shape
    # plain floats: Q and M are small, and per-block numpy calls dominate otherwise
    deficit = [0.0] * Q
    picks = []
    for wm, row in zip(w, P.tolist()):
        for q in range(Q):
            deficit[q] += wm * row[q]
        top = max(deficit) - TIE_TOL
        j = next(q for q in range(Q) if deficit[q] >= top)
        deficit[j] -= wm
        picks.append(j)
    out = np.zeros_like(P)
    out[np.arange(M), picks] = 1.0
    return relaxed.with_blocks(out)


def max_integration_gap(relaxed: ModePlan, binary: ModePlan) -> float:
    """``max_t || int_0^t (p_hat - p) ||_inf`` over the plan's time span.

    The integral is piecewise linear in ``t``, so block boundaries suffice.
    """
    if relaxed.blocks.shape != binary.blocks.shape or relaxed.l != binary.l or relaxed.h != binary.h:
        raise ModelError("plans must share the same blocking")
    dur = relaxed.lengths * relaxed.dt
    prefix = np.cumsum((relaxed.blocks - binary.blocks) * dur[:, None], axis=0)
    return float(np.max(np.abs(prefix))) if prefix.size else 0.0


def error_bound(l: int, Q: int, dt: float) -> float:
    """Worst-case rounding gap ``l (Q - 1) dt``."""
    if l < 1 or Q < 2 or not dt > 0:
        raise ModelError("error_bound needs l >= 1, Q >= 2, dt > 0")
    return l * (Q - 1) * dt
