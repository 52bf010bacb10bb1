"""Exact finite-probability engine.

A :class:`FiltrationTree` is a finite outcome set with a refining sequence of
partitions.  Blocks are contiguous index ranges of a fixed outcome ordering, so
level ``n`` is fully described by the sorted array of its block start indices.

An :class:`AdaptedProcess` stores one vector per atom and level, in the same
``(paths, times, dim)`` layout the grid backend uses; adaptedness (constancy on
the blocks of each level) is checked at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from martlab.space import NormedSpace

MAX_ATOMS = 2**20


class FiltrationTree:
    """Finite filtration: ``levels[n]`` holds the block starts of partition n."""

    def __init__(self, levels, prob):
        prob = np.asarray(prob, dtype=float)
        if prob.ndim != 1 or prob.size == 0:
            raise ValueError("prob must be a non-empty 1-d array")
        if prob.size > MAX_ATOMS:
            raise ValueError(f"tree has {prob.size} atoms, cap is {MAX_ATOMS}")
        if np.any(prob <= 0):
            raise ValueError("every outcome needs strictly positive probability")
        if abs(prob.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {prob.sum()!r}, not 1")
        starts = [np.asarray(s, dtype=np.int64) for s in levels]
        if not starts:
            raise ValueError("need at least level 0")
        n = prob.size
        for lvl, s in enumerate(starts):
            if s.ndim != 1 or s.size == 0 or s[0] != 0:
                raise ValueError(f"level {lvl}: block starts must begin at 0")
            if np.any(np.diff(s) <= 0) or s[-1] >= n:
                raise ValueError(f"level {lvl}: block starts must be strictly increasing in [0, {n})")
        if starts[0].size != 1:
            raise ValueError("level 0 must be the trivial partition")
        for lvl in range(1, len(starts)):
            if not np.isin(starts[lvl - 1], starts[lvl]).all():
                raise ValueError(f"level {lvl} does not refine level {lvl - 1}")
        for s in starts:
            s.setflags(write=False)
        prob.setflags(write=False)
        self.levels = tuple(starts)
        self.prob = prob

    @classmethod
    def rademacher(cls, depth: int) -> "FiltrationTree":
        """Dyadic tree of ``depth`` fair signs; atom bit ``depth - k`` encodes ``r_k``."""
        return cls.branching(depth, 2)

    @classmethod
    def branching(cls, depth: int, branching: int, probs=None) -> "FiltrationTree":
        """Homogeneous tree; ``probs`` are per-child weights (uniform if omitted)."""
        if depth < 0:
            raise ValueError("depth must be >= 0")
        if branching < 2:
            raise ValueError("branching must be >= 2")
        n = branching**depth
        if n > MAX_ATOMS:
            raise ValueError(f"tree would have {n} atoms, cap is {MAX_ATOMS}")
        if probs is None:
            w = np.full(branching, 1.0 / branching)
        else:
            w = np.asarray(probs, dtype=float)
            if w.shape != (branching,) or np.any(w <= 0):
                raise ValueError("probs must be positive, one per child")
            w = w / w.sum()
        prob = np.ones(1)
        for _ in range(depth):
            prob = np.outer(prob, w).ravel()
        levels = [np.arange(0, n, branching ** (depth - k)) for k in range(depth + 1)]
        return cls(levels, prob / prob.sum())

    @classmethod
    def from_random_probs(cls, depth: int, branching: int, rng: np.random.Generator) -> "FiltrationTree":
        """Homogeneous shape with Dirichlet child weights drawn independently per node."""
        n = branching**depth
        if n > MAX_ATOMS:
            raise ValueError(f"tree would have {n} atoms, cap is {MAX_ATOMS}")
        prob = np.ones(1)
        for _ in range(depth):
            w = rng.dirichlet(np.full(branching, 2.0), size=prob.size)
            prob = (prob[:, None] * w).ravel()
        levels = [np.arange(0, n, branching ** (depth - k)) for k in range(depth + 1)]
        return cls(levels, prob / prob.sum())

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def n_atoms(self) -> int:
        return self.prob.size

    def n_blocks(self, level: int) -> int:
        return self._starts(level).size

    def _starts(self, level: int) -> np.ndarray:
        if not 0 <= level <= self.depth:
            raise IndexError(f"level {level} out of range 0..{self.depth}")
        return self.levels[level]

    def counts(self, level: int) -> np.ndarray:
        s = self._starts(level)
        return np.diff(np.append(s, self.n_atoms))

    def block_ids(self, level: int) -> np.ndarray:
        return np.repeat(np.arange(self.n_blocks(level)), self.counts(level))

    def block_probs(self, level: int) -> np.ndarray:
        return np.add.reduceat(self.prob, self._starts(level))

    def expand(self, level: int, block_values) -> np.ndarray:
        """Atom-wise array from one value per level-``level`` block."""
        return np.repeat(np.asarray(block_values), self.counts(level), axis=0)

    def average(self, level: int, atom_values) -> np.ndarray:
        """Conditional expectation onto the level's blocks, one row per block."""
        x = np.asarray(atom_values, dtype=float)
        w = self.prob.reshape((-1,) + (1,) * (x.ndim - 1))
        s = self._starts(level)
        num = np.add.reduceat(x * w, s, axis=0)
        return num / self.block_probs(level).reshape((-1,) + (1,) * (x.ndim - 1))

    def is_measurable(self, level: int, atom_values, tol: float = 0.0) -> bool:
        x = np.asarray(atom_values)
        ref = self.expand(level, x[self._starts(level)])
        return bool(np.all(np.abs(x - ref) <= tol))

    def expect(self, atom_values) -> np.ndarray:
        x = np.asarray(atom_values, dtype=float)
        return np.tensordot(self.prob, x, axes=(0, 0))

    def sign_matrix(self) -> np.ndarray:
        """Rademacher coordinates ``r_k(omega)`` as an ``(atoms, depth)`` array (binary trees only)."""
        n = self.n_atoms
        if n != 2**self.depth or any(s.size != 2**k for k, s in enumerate(self.levels)):
            raise ValueError("sign coordinates need a binary tree")
        omega = np.arange(n)
        bits = (omega[:, None] >> (self.depth - 1 - np.arange(self.depth))[None, :]) & 1
        return 1 - 2 * bits


@dataclass(frozen=True, eq=False)
class AdaptedProcess:
    """Vector process on a tree: ``paths[omega, n]`` is the level-n value at atom omega."""

    tree: FiltrationTree
    paths: np.ndarray
    space: NormedSpace = None  # type: ignore[assignment]
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        p = np.array(self.paths, dtype=float)
        if p.ndim == 2:
            p = p[:, :, None]
        if p.ndim != 3 or p.shape[0] != self.tree.n_atoms or p.shape[1] != self.tree.depth + 1:
            raise ValueError(
                f"paths must have shape ({self.tree.n_atoms}, {self.tree.depth + 1}, d), got {p.shape}"
            )
        p.setflags(write=False)
        object.__setattr__(self, "paths", p)
        if self.space is None:
            object.__setattr__(self, "space", NormedSpace(p.shape[2], 2.0))
        elif self.space.dim != p.shape[2]:
            raise ValueError("space dimension does not match process dimension")
        if self.check:
            for n in range(self.tree.depth + 1):
                if not self.tree.is_measurable(n, p[:, n]):
                    raise ValueError(f"values at level {n} are not constant on level-{n} blocks")

    @classmethod
    def from_block_values(cls, tree: FiltrationTree, values, space: NormedSpace | None = None):
        """Build from a list with one ``(n_blocks(n), d)`` array per level."""
        if len(values) != tree.depth + 1:
            raise ValueError(f"need {tree.depth + 1} levels of values, got {len(values)}")
        cols = [tree.expand(n, np.atleast_2d(np.asarray(v, dtype=float)).reshape(tree.n_blocks(n), -1))
                for n, v in enumerate(values)]
        return cls(tree, np.stack(cols, axis=1), space)

    @property
    def depth(self) -> int:
        return self.tree.depth

    @property
    def dim(self) -> int:
        return self.paths.shape[2]

    @property
    def values(self) -> list[np.ndarray]:
        return [self.paths[self.tree.levels[n], n] for n in range(self.depth + 1)]

    @cached_property
    def increments(self) -> np.ndarray:
        return np.diff(self.paths, axis=1)

    @property
    def weights(self) -> np.ndarray:
        return self.tree.prob

    def replace(self, paths) -> "AdaptedProcess":
        return AdaptedProcess(self.tree, paths, self.space, check=False)

    def expect(self, level: int | None = None) -> np.ndarray:
        level = self.depth if level is None else level
        return self.tree.expect(self.paths[:, level])

    def __add__(self, other):
        if isinstance(other, AdaptedProcess):
            _same_tree(self, other)
            return self.replace(self.paths + other.paths)
        return self.replace(self.paths + np.asarray(other, dtype=float))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, AdaptedProcess):
            _same_tree(self, other)
            return self.replace(self.paths - other.paths)
        return self.replace(self.paths - np.asarray(other, dtype=float))

    def __neg__(self):
        return self.replace(-self.paths)

    def __mul__(self, c):
        return self.replace(self.paths * float(c))

    __rmul__ = __mul__


def _same_tree(a: AdaptedProcess, b: AdaptedProcess):
    if a.tree is not b.tree and not (
        a.tree.n_atoms == b.tree.n_atoms
        and len(a.tree.levels) == len(b.tree.levels)
        and all(np.array_equal(x, y) for x, y in zip(a.tree.levels, b.tree.levels))
        and np.array_equal(a.tree.prob, b.tree.prob)
    ):
        raise ValueError("processes live on different trees")


def cond_expect(proc: AdaptedProcess, from_level: int, to_level: int) -> np.ndarray:
    """E(proc_from | F_to) as one vector per level-``to_level`` block."""
    if not 0 <= from_level <= proc.depth:
        raise IndexError(f"from_level {from_level} out of range 0..{proc.depth}")
    if not 0 <= to_level <= from_level:
        raise IndexError(f"to_level must lie in 0..{from_level}, got {to_level}")
    return proc.tree.average(to_level, proc.paths[:, from_level])


def is_martingale(proc: AdaptedProcess, tol: float = 1e-10) -> tuple[bool, float]:
    """Check E(M_{n+1} | F_n) = M_n at every level.

    ``tol`` is relative to ``max(1, sup |M|)``; the returned violation is the
    largest absolute gap measured in the space norm.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    tree = proc.tree
    worst = 0.0
    for n in range(proc.depth):
        gap = cond_expect(proc, n + 1, n) - proc.paths[tree.levels[n], n]
        if gap.size:
            worst = max(worst, float(proc.space.norm(gap).max()))
    scale = max(1.0, float(np.abs(proc.paths).max(initial=0.0)))
    return worst <= tol * scale, worst


def discrete_compensator(proc: AdaptedProcess) -> AdaptedProcess:
    """Predictable V with V_0 = 0 and V_n = sum_{k<=n} E(dA_k | F_{k-1})."""
    if np.any(proc.paths[:, 0] != 0):
        raise ValueError("the compensated process must start at 0")
    tree = proc.tree
    inc = proc.increments
    steps = np.zeros_like(proc.paths)
    for k in range(1, proc.depth + 1):
        steps[:, k] = tree.expand(k - 1, tree.average(k - 1, inc[:, k - 1]))
    return proc.replace(np.cumsum(steps, axis=1))


def is_predictable(proc: AdaptedProcess, tol: float = 0.0) -> bool:
    """Level-n values measurable w.r.t. level n-1 (level 0 must be deterministic)."""
    tree = proc.tree
    if not tree.is_measurable(0, proc.paths[:, 0], tol):
        return False
    return all(tree.is_measurable(n - 1, proc.paths[:, n], tol) for n in range(1, proc.depth + 1))


def backward_martingale(tree: FiltrationTree, leaves, space: NormedSpace | None = None) -> AdaptedProcess:
    """Martingale closed by the given terminal (atom-wise) values."""
    leaves = np.asarray(leaves, dtype=float)
    if leaves.ndim == 1:
        leaves = leaves[:, None]
    cols = [tree.expand(n, tree.average(n, leaves)) for n in range(tree.depth + 1)]
    return AdaptedProcess(tree, np.stack(cols, axis=1), space, check=False)
