"""Constructors for the martingale families used across the laboratory.

Grid models are small frozen dataclasses with two faces:

* ``sample(grid, n, rng, space, acc)`` draws a dict of channel increments
  populating only the component's channels;
* ``step_law(grid, k, acc, space)`` returns the (state-independent) law of the step ending
  at ``t_k`` as a :class:`FiniteLaw`, or ``None`` when the law has no finite
  support.  Exact grid compensators are built from these laws.

Jump occurrence for the compensated Poisson stream is Bernoulli with
probability ``intensity * dt`` per step, which keeps at most one jump per step
and makes the drift ``-intensity * mean_mark * dt`` the exact compensator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from martlab.finprob import AdaptedProcess, FiltrationTree, backward_martingale
from martlab.process import Channel, LabeledPaths, TimeGrid
from martlab.space import NormedSpace

MAX_INTENSITY_MESH = 0.1
MAX_SUPPORT = 4096


def intensity_mesh_ok(intensity: float, mesh: float) -> bool:
    """``intensity * mesh <= MAX_INTENSITY_MESH`` up to rounding of the grid times."""
    return intensity * mesh <= MAX_INTENSITY_MESH * (1 + 1e-12)


# -- laws ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FiniteLaw:
    """Discrete law on R^d: ``probs[i]`` at ``points[i]``."""

    probs: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        x = np.asarray(self.points, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if p.ndim != 1 or x.shape[0] != p.size or np.any(p < 0):
            raise ValueError("need one non-negative probability per support point")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "points", x)

    @classmethod
    def point(cls, x) -> "FiniteLaw":
        return cls(np.ones(1), np.atleast_2d(np.asarray(x, dtype=float)))

    @property
    def mean(self) -> np.ndarray:
        return self.probs @ self.points

    def convolve(self, other: "FiniteLaw") -> "FiniteLaw":
        """Law of the sum of independent draws."""
        if self.probs.size * other.probs.size > MAX_SUPPORT:
            raise ValueError("convolved support exceeds the enumeration cap")
        p = np.outer(self.probs, other.probs).ravel()
        x = (self.points[:, None, :] + other.points[None, :, :]).reshape(-1, self.points.shape[1])
        keep = p > 0
        return FiniteLaw(p[keep], x[keep])

    def scaled(self, c: float) -> "FiniteLaw":
        return FiniteLaw(self.probs, self.points * c)


class MarkLaw:
    """Law of jump marks."""

    finite: bool = False

    @property
    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class FiniteMarks(MarkLaw):
    points: np.ndarray
    probs: np.ndarray

    finite = True

    def __post_init__(self):
        law = FiniteLaw(self.probs, self.points)
        object.__setattr__(self, "points", law.points)
        object.__setattr__(self, "probs", law.probs)

    @classmethod
    def rademacher(cls, vector) -> "FiniteMarks":
        v = np.asarray(vector, dtype=float)
        return cls(np.stack([v, -v]), np.array([0.5, 0.5]))

    @property
    def law(self) -> FiniteLaw:
        return FiniteLaw(self.probs, self.points)

    @property
    def mean(self) -> np.ndarray:
        return self.probs @ self.points

    def sample(self, rng, size):
        idx = rng.choice(self.probs.size, size=size, p=self.probs)
        return self.points[idx]

    def to_dict(self):
        return {"kind": "finite", "points": self.points.tolist(), "probs": self.probs.tolist()}


@dataclass(frozen=True, eq=False)
class GaussianMarks(MarkLaw):
    mean_vector: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mean_vector", np.atleast_1d(np.asarray(self.mean_vector, dtype=float)))
        if self.scale < 0:
            raise ValueError("scale must be >= 0")

    @property
    def mean(self) -> np.ndarray:
        return self.mean_vector

    def sample(self, rng, size):
        d = self.mean_vector.size
        return self.mean_vector + self.scale * rng.standard_normal((size, d))

    def to_dict(self):
        return {"kind": "gaussian", "mean": self.mean_vector.tolist(), "scale": self.scale}


# -- grid models ------------------------------------------------------------

class GridComponent:
    """Interface shared by the grid generators."""

    channels: tuple[Channel, ...] = ()

    def acc_steps(self, grid: TimeGrid) -> np.ndarray:
        return np.zeros(grid.n_steps, dtype=bool)

    def check(self, grid: TimeGrid, space: NormedSpace) -> None:
        pass

    def step_law(self, grid: TimeGrid, k: int, acc: np.ndarray, space: NormedSpace) -> FiniteLaw | None:
        raise NotImplementedError

    def sample(self, grid: TimeGrid, n: int, rng: np.random.Generator, space: NormedSpace,
               acc: np.ndarray) -> dict:
        """Channel increment arrays ``(n, K, d)``."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ContinuousDriver(GridComponent):
    """Symmetric random walk with step ``volatility * sqrt(dt)``.

    With ``direction=None`` every coordinate moves by an independent sign scaled
    by ``1/sqrt(d)``, so ``E||dM||_2^2 = volatility^2 dt`` in either mode.
    """

    volatility: float | Sequence[float] | Callable[[float], float] = 1.0
    direction: np.ndarray | None = None

    channels = (Channel.CONT,)

    def scales(self, grid: TimeGrid) -> np.ndarray:
        v = self.volatility
        if callable(v):
            vol = np.array([float(v(t)) for t in grid.times[:-1]])
        elif np.ndim(v) == 0:
            vol = np.full(grid.n_steps, float(v))
        else:
            vol = np.asarray(v, dtype=float)
            if vol.shape != (grid.n_steps,):
                raise ValueError("per-step volatility must have one entry per grid step")
        if not np.all(np.isfinite(vol)):
            raise ValueError("volatility must be bounded")
        return vol * np.sqrt(grid.dt)

    def _unit(self, d: int) -> np.ndarray | None:
        if self.direction is None:
            return None
        e = np.asarray(self.direction, dtype=float)
        if e.shape != (d,) or not np.any(e):
            raise ValueError("direction must be a nonzero vector of the space dimension")
        return e / np.linalg.norm(e)

    def check(self, grid, space):
        self.scales(grid)
        self._unit(space.dim)

    def step_law(self, grid, k, acc, space):
        s = self.scales(grid)[k - 1]
        d = space.dim
        e = self._unit(d)
        if e is not None:
            return FiniteLaw(np.array([0.5, 0.5]), np.stack([s * e, -s * e]))
        if 2**d > MAX_SUPPORT:
            return None
        signs = 1 - 2 * ((np.arange(2**d)[:, None] >> np.arange(d)[None, :]) & 1)
        return FiniteLaw(np.full(2**d, 2.0**-d), signs * (s / math.sqrt(d)))

    def sample(self, grid, n, rng, space, acc):
        d = space.dim
        s = self.scales(grid)
        e = self._unit(d)
        if e is not None:
            signs = rng.integers(0, 2, size=(n, grid.n_steps)) * 2 - 1
            inc = signs[:, :, None] * s[None, :, None] * e
        else:
            signs = rng.integers(0, 2, size=(n, grid.n_steps, d)) * 2 - 1
            inc = signs * (s[None, :, None] / math.sqrt(d))
        return {Channel.CONT: inc.astype(float)}


@dataclass(frozen=True, eq=False)
class CompensatedPoisson(GridComponent):
    """Marked point process with intensity ``intensity`` and its exact compensator."""

    intensity: float
    marks: MarkLaw

    channels = (Channel.QLC_JUMP, Channel.QLC_DRIFT)

    def check(self, grid, space):
        if not self.intensity > 0:
            raise ValueError("intensity must be positive")
        if not intensity_mesh_ok(self.intensity, grid.mesh):
            raise ValueError(
                f"intensity*mesh = {self.intensity * grid.mesh:.4g} exceeds {MAX_INTENSITY_MESH}; refine the grid"
            )
        if self.marks.mean.shape != (space.dim,):
            raise ValueError("mark dimension does not match the space")

    def jump_probs(self, grid: TimeGrid, acc: np.ndarray) -> np.ndarray:
        return np.where(acc, 0.0, self.intensity * grid.dt)

    def drift(self, grid: TimeGrid, acc: np.ndarray) -> np.ndarray:
        """Compensator increments, shape ``(K, d)``."""
        return -self.jump_probs(grid, acc)[:, None] * self.marks.mean[None, :]

    def step_law(self, grid, k, acc, space):
        if not self.marks.finite:
            return None
        p = self.jump_probs(grid, acc)[k - 1]
        drift = self.drift(grid, acc)[k - 1]
        law = self.marks.law
        probs = np.concatenate([[1.0 - p], p * law.probs])
        points = np.vstack([np.zeros((1, law.points.shape[1])), law.points]) + drift
        keep = probs > 0
        return FiniteLaw(probs[keep], points[keep])

    def sample(self, grid, n, rng, space, acc):
        K, d = grid.n_steps, space.dim
        hit = rng.random((n, K)) < self.jump_probs(grid, acc)[None, :]
        jumps = np.zeros((n, K, d))
        count = int(hit.sum())
        if count:
            jumps[hit] = self.marks.sample(rng, count)
        drift = np.broadcast_to(self.drift(grid, acc), (n, K, d)).copy()
        return {Channel.QLC_JUMP: jumps, Channel.QLC_DRIFT: drift}


@dataclass(frozen=True, eq=False)
class AccessibleSeries(GridComponent):
    """Independent zero-mean marks at declared (predictable) grid times."""

    times: tuple[float, ...]
    marks: MarkLaw

    channels = (Channel.ACC_JUMP,)

    def acc_steps(self, grid):
        acc = np.zeros(grid.n_steps, dtype=bool)
        for t in self.times:
            k = grid.index_of(t)
            if k == 0:
                raise ValueError("time 0 carries the initial value, not an accessible series jump")
            acc[k - 1] = True
        return acc

    def check(self, grid, space):
        self.acc_steps(grid)
        if np.abs(self.marks.mean).max(initial=0.0) > 1e-12:
            raise ValueError("accessible marks must have zero mean")
        if self.marks.mean.shape != (space.dim,):
            raise ValueError("mark dimension does not match the space")

    def step_law(self, grid, k, acc, space):
        if not self.acc_steps(grid)[k - 1]:
            return FiniteLaw.point(np.zeros(self.marks.mean.size))
        return self.marks.law if self.marks.finite else None

    def sample(self, grid, n, rng, space, acc):
        mine = self.acc_steps(grid)
        out = np.zeros((n, grid.n_steps, space.dim))
        for k in np.flatnonzero(mine):
            out[:, k] = self.marks.sample(rng, n)
        return {Channel.ACC_JUMP: out}


@dataclass(frozen=True, eq=False)
class GridModel:
    """Weighted sum of independent grid components plus a deterministic ``M_0``."""

    space: NormedSpace
    grid: TimeGrid
    components: tuple[tuple[float, GridComponent], ...]
    initial: np.ndarray | None = None

    def __post_init__(self):
        init = np.zeros(self.space.dim) if self.initial is None else np.asarray(self.initial, dtype=float)
        if init.shape != (self.space.dim,):
            raise ValueError("initial value has the wrong dimension")
        object.__setattr__(self, "initial", init)
        comps = []
        for w, c in self.components:
            c.check(self.grid, self.space)
            comps.append((float(w), c))
        object.__setattr__(self, "components", tuple(comps))

    @property
    def acc(self) -> np.ndarray:
        acc = np.zeros(self.grid.n_steps, dtype=bool)
        for _, c in self.components:
            acc |= c.acc_steps(self.grid)
        return acc

    @property
    def has_finite_steps(self) -> bool:
        return all(self.step_law(k) is not None for k in range(1, self.grid.n_steps + 1))

    def step_law(self, k: int) -> FiniteLaw | None:
        law = FiniteLaw.point(np.zeros(self.space.dim))
        acc = self.acc
        for w, c in self.components:
            part = c.step_law(self.grid, k, acc, self.space)
            if part is None:
                return None
            law = law.convolve(part.scaled(w))
        return law

    def sample(self, n: int, seed) -> LabeledPaths:
        """Draw ``n`` paths; ``seed`` is an int or a ``SeedSequence``."""
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        children = ss.spawn(len(self.components))
        acc = self.acc
        incs: dict = {}
        for (w, c), child in zip(self.components, children):
            for ch, a in c.sample(self.grid, n, np.random.default_rng(child), self.space, acc).items():
                a = a * w
                incs[ch] = incs[ch] + a if ch in incs else a
        init = np.broadcast_to(self.initial, (n, self.space.dim)).copy()
        return LabeledPaths(self.grid, init, incs, acc, self.space)

    def compensator_drift(self) -> np.ndarray:
        """Deterministic QLC_DRIFT increments ``(K, d)`` of the whole model."""
        out = np.zeros((self.grid.n_steps, self.space.dim))
        for w, c in self.components:
            if isinstance(c, CompensatedPoisson):
                out += w * c.drift(self.grid, self.acc)
        return out


def gen_continuous_driver(grid: TimeGrid, volatility, space: NormedSpace, seed, n_paths: int = 1,
                          direction=None) -> LabeledPaths:
    return GridModel(space, grid, ((1.0, ContinuousDriver(volatility, direction)),)).sample(n_paths, seed)


def gen_compensated_poisson(grid: TimeGrid, intensity: float, marks: MarkLaw, space: NormedSpace, seed,
                            n_paths: int = 1) -> LabeledPaths:
    return GridModel(space, grid, ((1.0, CompensatedPoisson(intensity, marks)),)).sample(n_paths, seed)


def gen_accessible_series(grid: TimeGrid, times, marks: MarkLaw, space: NormedSpace, seed,
                          n_paths: int = 1) -> LabeledPaths:
    return GridModel(space, grid, ((1.0, AccessibleSeries(tuple(times), marks)),)).sample(n_paths, seed)


# -- exact-tree martingales --------------------------------------------------

LEAF_LAWS = ("normal", "student_t", "rademacher")


def gen_random_tree_martingale(seed: int, depth: int, branching: int, space: NormedSpace,
                               leaves: str = "normal", random_probs: bool = False) -> AdaptedProcess:
    """Martingale closed by i.i.d. seeded leaf values (backward averaging)."""
    if branching < 2:
        raise ValueError("branching must be >= 2")
    rng = np.random.default_rng(seed)
    if random_probs:
        tree = FiltrationTree.from_random_probs(depth, branching, rng)
    else:
        tree = FiltrationTree.branching(depth, branching)
    shape = (tree.n_atoms, space.dim)
    if leaves == "normal":
        x = rng.standard_normal(shape)
    elif leaves == "student_t":
        x = rng.standard_t(1.5, size=shape)
    elif leaves == "rademacher":
        x = rng.integers(0, 2, size=shape) * 2.0 - 1.0
    else:
        raise ValueError(f"unknown leaf law {leaves!r}; choose from {LEAF_LAWS}")
    return backward_martingale(tree, x, space)


def prefix_index(signs: np.ndarray) -> np.ndarray:
    """Row index of the sign prefix ``(r_1..r_{m})`` (``r = -1`` is bit 1, most significant first)."""
    signs = np.asarray(signs)
    m = signs.shape[-1]
    if m == 0:
        return np.zeros(signs.shape[:-1], dtype=np.int64)
    bits = (1 - signs) // 2
    return (bits * (1 << np.arange(m - 1, -1, -1))).sum(axis=-1).astype(np.int64)


class PaleyWalshSpec:
    """Predictable factors ``phi_n`` of a Paley-Walsh martingale ``df_n = r_n phi_n(r_1..r_{n-1})``."""

    depth: int
    dim: int
    f0: np.ndarray

    def phi_at(self, n: int, signs: np.ndarray) -> np.ndarray:
        """``phi_n`` evaluated at a batch of prefixes ``(B, n - 1)``; returns ``(B, dim)``."""
        raise NotImplementedError

    def sup_norm(self, n: int, space: NormedSpace) -> float:
        prefixes = 1 - 2 * ((np.arange(2 ** (n - 1))[:, None] >> np.arange(n - 2, -1, -1)[None, :]) & 1)
        return float(space.norm(self.phi_at(n, prefixes.reshape(2 ** (n - 1), n - 1))).max())


class TablePaleyWalsh(PaleyWalshSpec):
    """``phi[n - 1]`` is a ``(2^(n-1), d)`` table indexed by :func:`prefix_index`."""

    def __init__(self, phi, f0=None):
        tables = []
        for n, t in enumerate(phi, start=1):
            t = np.asarray(t, dtype=float)
            if t.ndim == 1:
                t = t[None, :]
            if t.shape[0] != 2 ** (n - 1):
                raise ValueError(f"phi_{n} needs {2 ** (n - 1)} rows, got {t.shape[0]}")
            tables.append(t)
        if not tables:
            raise ValueError("need at least one factor")
        d = tables[0].shape[1]
        if any(t.shape[1] != d for t in tables):
            raise ValueError("all factors must share the dimension")
        self.tables = tables
        self.depth = len(tables)
        self.dim = d
        self.f0 = np.zeros(d) if f0 is None else np.asarray(f0, dtype=float)

    def phi_at(self, n, signs):
        return self.tables[n - 1][prefix_index(signs)]

    def sup_norm(self, n, space):
        return float(space.norm(self.tables[n - 1]).max())

    def padded(self, dim: int) -> "TablePaleyWalsh":
        """Same martingale embedded in a larger space by zero coordinates."""
        if dim < self.dim:
            raise ValueError("can only pad to a larger dimension")
        tabs = [np.hstack([t, np.zeros((t.shape[0], dim - self.dim))]) for t in self.tables]
        return TablePaleyWalsh(tabs, np.concatenate([self.f0, np.zeros(dim - self.dim)]))

    def truncated(self, depth: int) -> "TablePaleyWalsh":
        return TablePaleyWalsh(self.tables[:depth], self.f0)


class AgreementWitness(PaleyWalshSpec):
    """Sign-flipped Haar-type martingale in l^inf over ``{-1,1}^depth``.

    Coordinate ``eta`` moves at step ``n`` only while the signs so far agree with
    ``eta``: ``phi_n^eta = scale * eta_n * u_n * 1{r_k = eta_k, k < n}`` with
    ``u_n = +1`` for odd and ``-1`` for even ``n``.  Every coordinate of ``f``
    stays within ``[-scale, 2 scale]`` while the transform keeping odd steps
    grows linearly along the agreeing coordinate.
    """

    def __init__(self, depth: int, scale: float = 0.5):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self.dim = 2**depth
        self.scale = float(scale)
        self.f0 = np.zeros(self.dim)
        eta = 1 - 2 * ((np.arange(self.dim)[:, None] >> np.arange(depth - 1, -1, -1)[None, :]) & 1)
        self._eta = eta

    @staticmethod
    def transform_mask(depth: int) -> np.ndarray:
        """{0,1} coefficients keeping the odd steps."""
        return (np.arange(1, depth + 1) % 2 == 1).astype(float)

    def phi_at(self, n, signs):
        signs = np.asarray(signs)
        if signs.ndim == 1:
            signs = signs[None, :]
        agree = np.ones((signs.shape[0], self.dim), dtype=bool)
        if n > 1:
            idx = prefix_index(signs)
            # coordinates agreeing with the prefix form one contiguous range
            width = 2 ** (self.depth - n + 1)
            lo = idx * width
            cols = np.arange(self.dim)[None, :]
            agree = (cols >= lo[:, None]) & (cols < lo[:, None] + width)
        u = 1.0 if n % 2 == 1 else -1.0
        return self.scale * u * self._eta[None, :, n - 1] * agree

    def sup_norm(self, n, space):
        if math.isinf(space.q):
            return self.scale
        return super().sup_norm(n, space)


def gen_paley_walsh(pw: PaleyWalshSpec, depth: int | None = None, space: NormedSpace | None = None) -> AdaptedProcess:
    """Exact Paley-Walsh martingale on the dyadic tree of the given depth."""
    depth = pw.depth if depth is None else depth
    if depth < 1 or depth > pw.depth:
        raise ValueError(f"depth must lie in 1..{pw.depth}")
    tree = FiltrationTree.rademacher(depth)
    r = tree.sign_matrix()
    paths = np.empty((tree.n_atoms, depth + 1, pw.dim))
    paths[:, 0] = pw.f0
    for n in range(1, depth + 1):
        paths[:, n] = paths[:, n - 1] + r[:, n - 1:n] * pw.phi_at(n, r[:, : n - 1])
    return AdaptedProcess(tree, paths, space or NormedSpace(pw.dim, 2.0), check=False)


# -- continuous-time embedding of a Paley-Walsh martingale ----------------------

def walk_survival(levels: int, steps: int) -> float:
    """P(a fair +-1 walk from 0 has not hit +-levels within ``steps`` steps)."""
    size = 2 * levels - 1
    p = np.zeros(size)
    p[levels - 1] = 1.0
    for _ in range(steps):
        q = np.zeros(size)
        q[1:] += 0.5 * p[:-1]
        q[:-1] += 0.5 * p[1:]
        p = q
    return float(p.sum())


def bridge_steps(levels: int, target: float, cap: int = 100_000) -> int:
    """Smallest step count whose non-absorption probability is below ``target``."""
    size = 2 * levels - 1
    p = np.zeros(size)
    p[levels - 1] = 1.0
    for s in range(cap + 1):
        if p.sum() < target:
            return s
        q = np.zeros(size)
        q[1:] += 0.5 * p[:-1]
        q[:-1] += 0.5 * p[1:]
        p = q
    raise ValueError(f"leak target {target:g} needs more than {cap} bridge steps")


@dataclass(frozen=True, eq=False)
class EmbeddingSample:
    """Compact draw: embedding signs plus the scalar bridge walks (in units of ``1/levels``)."""

    sigma: np.ndarray
    walks: dict

    @property
    def n_paths(self) -> int:
        return self.sigma.shape[0]


class BurkholderEmbedding:
    """Continuous-time martingale on [0, 1) built from a Paley-Walsh spec and {0,1} coefficients.

    Block ``n`` occupies ``(1 - 2^-n, 1 - 2^-(n+1)]``.  With ``a_n = 0`` the block is
    one accessible jump ``sigma_n phi_n(sigma_1..sigma_{n-1})`` at its right end.
    With ``a_n = 1`` it carries ``B^n_s phi_n(...)`` on the CONT channel, where
    ``B^n`` is a fair walk on ``{-1, .., 1}`` (step ``1/levels``) absorbed at
    ``+-1``, run for a fixed number of sub-steps, then nudged by ``+-1/(2 levels)``
    if it sits at 0; ``sigma_n = sign(B^n_end)``.  The sub-step count makes
    ``P(|B^n_end| != 1)`` at most ``leak_fraction * 2^-n / (||phi_n|| + 1)``.
    """

    def __init__(self, pw: PaleyWalshSpec, a, space: NormedSpace, depth: int | None = None,
                 leak_fraction: float = 0.5, levels: int = 4):
        depth = pw.depth if depth is None else depth
        a = np.asarray(a, dtype=int)
        if depth < 1 or depth > pw.depth:
            raise ValueError(f"depth must lie in 1..{pw.depth}")
        if a.shape != (depth,) or not np.isin(a, (0, 1)).all():
            raise ValueError("a must be a {0,1} sequence with one entry per block")
        if not 0 < leak_fraction < 1:
            raise ValueError("leak_fraction must lie in (0, 1) so the leak stays strictly below its bound")
        if levels < 1:
            raise ValueError("levels must be >= 1")
        if space.dim != pw.dim:
            raise ValueError("space dimension does not match the Paley-Walsh spec")
        self.pw, self.a, self.space, self.depth = pw, a, space, depth
        self.levels = levels
        self.phi_sup = np.array([pw.sup_norm(n, space) for n in range(1, depth + 1)])
        self.leak_bound = 2.0 ** -np.arange(1, depth + 1) / (self.phi_sup + 1.0)
        self.leak_target = leak_fraction * self.leak_bound
        self.steps = np.array([bridge_steps(levels, t) if an else 0 for t, an in zip(self.leak_target, a)])
        self.leak = np.array([walk_survival(levels, s) if an else 0.0 for s, an in zip(self.steps, a)])
        if np.any(self.leak >= self.leak_bound):
            raise ValueError("bridge leak violates the per-block bound")
        self.grid, self.block_end = self._grid()

    def _grid(self):
        times = [0.0, 0.5]
        ends = []
        for n in range(1, self.depth + 1):
            lo, hi = 1 - 2.0**-n, 1 - 2.0 ** -(n + 1)
            if self.a[n - 1]:
                m = int(self.steps[n - 1]) + 1
                times.extend(lo + (hi - lo) * np.arange(1, m + 1) / m)
            else:
                times.append(hi)
            ends.append(len(times) - 1)
        return TimeGrid(np.array(times)), np.array(ends)

    def sample(self, n_paths: int, seed) -> EmbeddingSample:
        rng = np.random.default_rng(seed)
        m = self.levels
        sigma = np.empty((n_paths, self.depth), dtype=np.int64)
        walks = {}
        for n in range(1, self.depth + 1):
            if not self.a[n - 1]:
                sigma[:, n - 1] = rng.integers(0, 2, size=n_paths) * 2 - 1
                continue
            s = int(self.steps[n - 1])
            pos = np.zeros((n_paths, s + 2), dtype=np.int64)
            moves = rng.integers(0, 2, size=(n_paths, s)) * 2 - 1
            nudge = rng.integers(0, 2, size=n_paths) * 2 - 1
            cur = np.zeros(n_paths, dtype=np.int64)
            for j in range(s):
                live = np.abs(cur) < m
                cur = cur + np.where(live, moves[:, j], 0)
                pos[:, j + 1] = cur
            # positions are stored doubled so the half-step nudge stays integral
            pos *= 2
            pos[:, s + 1] = pos[:, s] + np.where(pos[:, s] == 0, nudge, 0)
            walks[n] = pos
            sigma[:, n - 1] = np.sign(pos[:, s + 1])
        return EmbeddingSample(sigma, walks)

    def bridge_end(self, sample: EmbeddingSample, n: int) -> np.ndarray:
        return sample.walks[n][:, -1] / (2.0 * self.levels)

    def to_paths(self, sample: EmbeddingSample) -> LabeledPaths:
        K, d = self.grid.n_steps, self.space.dim
        n_paths = sample.n_paths
        cont = np.zeros((n_paths, K, d))
        accj = np.zeros((n_paths, K, d))
        acc = np.zeros(K, dtype=bool)
        for n in range(1, self.depth + 1):
            phi = self.pw.phi_at(n, sample.sigma[:, : n - 1])
            end = self.block_end[n - 1]
            if self.a[n - 1]:
                w = sample.walks[n] / (2.0 * self.levels)
                steps = np.diff(w, axis=1)
                start = end - steps.shape[1]
                cont[:, start:end] = steps[:, :, None] * phi[:, None, :]
            else:
                acc[end - 1] = True
                accj[:, end - 1] = sample.sigma[:, n - 1:n] * phi
        init = np.broadcast_to(self.pw.f0, (n_paths, d)).copy()
        return LabeledPaths(self.grid, init, {Channel.CONT: cont, Channel.ACC_JUMP: accj}, acc, self.space)

    def summary(self, sample: EmbeddingSample, chunk: int = 256) -> dict:
        """Per-path ``(M^c)*_1``, ``||M_end||`` and ``||f~_end||`` without materializing paths.

        Inside a bridge block the continuous part is ``C + x phi`` with scalar
        ``x`` ranging over the visited walk values; a norm is convex in ``x``,
        so its block maximum sits at the walk's minimum or maximum.
        """
        n_paths = sample.n_paths
        csup = np.zeros(n_paths)
        end_norm = np.zeros(n_paths)
        f_norm = np.zeros(n_paths)
        for lo in range(0, n_paths, chunk):
            hi = min(n_paths, lo + chunk)
            sig = sample.sigma[lo:hi]
            c = np.zeros((hi - lo, self.space.dim))
            total = np.broadcast_to(self.pw.f0, c.shape).copy()
            ftil = total.copy()
            run = np.zeros(hi - lo)
            for n in range(1, self.depth + 1):
                phi = self.pw.phi_at(n, sig[:, : n - 1])
                ftil += sig[:, n - 1:n] * phi
                if self.a[n - 1]:
                    w = sample.walks[n][lo:hi] / (2.0 * self.levels)
                    for x in (w.min(axis=1), w.max(axis=1)):
                        run = np.maximum(run, self.space.norm(c + x[:, None] * phi))
                    step = w[:, -1:] * phi
                    c += step
                    total += step
                else:
                    total += sig[:, n - 1:n] * phi
            csup[lo:hi] = run
            end_norm[lo:hi] = self.space.norm(total)
            f_norm[lo:hi] = self.space.norm(ftil)
        return {"cont_sup": csup, "end_norm": end_norm, "f_norm": f_norm}


def gen_burkholder_embedding(pw: PaleyWalshSpec, a, space: NormedSpace, depth: int | None = None,
                             leak_fraction: float = 0.5, levels: int = 4, n_paths: int = 1,
                             seed=0) -> LabeledPaths:
    emb = BurkholderEmbedding(pw, a, space, depth, leak_fraction, levels)
    return emb.to_paths(emb.sample(n_paths, seed))
