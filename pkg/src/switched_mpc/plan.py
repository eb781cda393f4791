"""Blocked mode plans."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelError

__all__ = ["ModePlan", "block_layout"]


def block_layout(N: int, l: int, h: int | None = None):
    """Return ``(M, lengths)`` for a horizon of nominal length ``N``.

    The nominal grid holds ``M = N / l`` blocks.  A shortened first block of
    ``h`` intervals shrinks the horizon to ``h + (M - 1) l``.
    """
    if l < 1:
        raise ModelError(f"block length must be >= 1, got {l}")
    if N % l:
        raise ModelError(f"block length l={l} does not divide the horizon N={N}")
    h = l if h is None else h
    if not 1 <= h <= l:
        raise ModelError(f"first-block length h={h} must satisfy 1 <= h <= l={l}")
    M = N // l
    return M, np.array([h] + [l] * (M - 1), dtype=int)


@dataclass(frozen=True)
class ModePlan:
    """Per-block mode weights; row ``m`` holds on ``lengths[m]`` grid intervals."""

    blocks: np.ndarray
    l: int
    h: int
    dt: float

    def __post_init__(self):
        blocks = np.array(self.blocks, dtype=float)
        if blocks.ndim != 2 or blocks.shape[1] < 2:
            raise ModelError(f"plan blocks must be an (M, Q) array with Q >= 2, got {blocks.shape}")
        if not 1 <= self.h <= self.l:
            raise ModelError(f"first-block length h={self.h} must satisfy 1 <= h <= l={self.l}")
        if not self.dt > 0:
            raise ModelError("plan dt must be positive")
        blocks.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @property
    def M(self) -> int:
        return self.blocks.shape[0]

    @property
    def Q(self) -> int:
        return self.blocks.shape[1]

    @property
    def lengths(self) -> np.ndarray:
        return np.array([self.h] + [self.l] * (self.M - 1), dtype=int)

    @property
    def N(self) -> int:
        return int(self.lengths.sum())

    def on_simplex(self, tol: float = 1e-8) -> bool:
        b = self.blocks
        if b.size == 0:
            return True
        return bool(b.min() >= -tol and b.max() <= 1 + tol and np.abs(b.sum(axis=1) - 1.0).max() <= tol)

    def is_binary(self, tol: float = 0.0) -> bool:
        b = self.blocks
        ones = np.abs(b - 1.0) <= tol
        zeros = np.abs(b) <= tol
        return bool(np.all(ones.sum(axis=1) == 1) and np.all(zeros.sum(axis=1) == self.Q - 1))

    def expand(self) -> np.ndarray:
        """Per-interval mode weights, shape ``(N, Q)``."""
        return np.repeat(self.blocks, self.lengths, axis=0)

    def mode_indices(self) -> np.ndarray:
        """Active mode index per block (binary plans)."""
        return np.argmax(self.blocks, axis=1)

    def with_blocks(self, blocks) -> "ModePlan":
        return ModePlan(blocks, self.l, self.h, self.dt)
