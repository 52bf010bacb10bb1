"""Finite-dimensional l_q spaces and finite separating sets of functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NormedSpace:
    """R^d with the l_q norm, ``q`` in [1, inf]."""

    dim: int
    q: float = 2.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if not (self.q >= 1):
            raise ValueError(f"q must be >= 1 or inf, got {self.q!r}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "q", float(self.q))

    @property
    def conjugate(self) -> float:
        """Exponent of the dual norm."""
        if self.q == 1.0:
            return math.inf
        if math.isinf(self.q):
            return 1.0
        return self.q / (self.q - 1.0)

    @property
    def is_hilbert(self) -> bool:
        return self.q == 2.0 or self.dim == 1

    def norm(self, v) -> np.ndarray:
        """Norm along the last axis."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1:] != (self.dim,):
            raise ValueError(f"expected trailing dimension {self.dim}, got shape {v.shape}")
        return _lq(v, self.q)

    def dual_norm(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1:] != (self.dim,):
            raise ValueError(f"expected trailing dimension {self.dim}, got shape {v.shape}")
        return _lq(v, self.conjugate)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "q": "inf" if math.isinf(self.q) else self.q}


def _lq(v: np.ndarray, q: float) -> np.ndarray:
    a = np.abs(v)
    if math.isinf(q):
        return a.max(axis=-1)
    if q == 1.0:
        return a.sum(axis=-1)
    if q == 2.0:
        return np.sqrt((a * a).sum(axis=-1))
    return (a**q).sum(axis=-1) ** (1.0 / q)


def norm(space: NormedSpace, v) -> np.ndarray:
    return space.norm(v)


@dataclass(frozen=True)
class DualSet:
    """Finite family of functionals acting by the Euclidean pairing."""

    functionals: np.ndarray

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.functionals, dtype=float))
        f.setflags(write=False)
        object.__setattr__(self, "functionals", f)

    def __len__(self):
        return self.functionals.shape[0]

    def __iter__(self):
        return iter(self.functionals)

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.functionals))

    def pair(self, v) -> np.ndarray:
        """All pairings <v, x*>, appended as a new last axis."""
        return np.asarray(v, dtype=float) @ self.functionals.T


def separating_set(space: NormedSpace, extras: int = 0, seed: int = 0) -> DualSet:
    """Coordinate functionals plus ``extras`` seeded points of the Euclidean unit sphere."""
    if extras < 0:
        raise ValueError("extras must be >= 0")
    rows = [np.eye(space.dim)]
    if extras:
        g = np.random.default_rng(seed).standard_normal((extras, space.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rows.append(g)
    return DualSet(np.vstack(rows))
