"""Jump measures, compensators, predictable transforms and subordination predicates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from martlab.finprob import AdaptedProcess, discrete_compensator, is_predictable
from martlab.generators import GridModel
from martlab.process import JUMP_CHANNELS, Channel, LabeledPaths, TimeGrid, quadratic_variation
from martlab.space import DualSet, NormedSpace


@dataclass(frozen=True, eq=False)
class JumpStream:
    """Jump marks of a path batch: ``marks[i, k - 1]`` is the jump at ``t_k`` (zero if none)."""

    grid: TimeGrid
    marks: np.ndarray
    channel: Channel = Channel.QLC_JUMP

    @property
    def mask(self) -> np.ndarray:
        return np.any(self.marks != 0, axis=-1)

    def events(self, path_index: int = 0) -> list[tuple[int, np.ndarray]]:
        """``(grid index, mark)`` pairs for one path."""
        return [(k + 1, self.marks[path_index, k]) for k in np.flatnonzero(self.mask[path_index])]

    def total_variation(self, space: NormedSpace) -> np.ndarray:
        return space.norm(self.marks).sum(axis=-1)


def jump_measure(paths: LabeledPaths, channels=JUMP_CHANNELS) -> JumpStream:
    """Nonzero jump increments of the selected jump channels.

    Each step holds at most one jump per channel; selecting both jump channels
    is allowed because QLC and ACC jumps never share a step.
    """
    chans = tuple(Channel(c) for c in channels)
    bad = [c for c in chans if c not in JUMP_CHANNELS]
    if bad:
        raise ValueError(f"not jump channels: {[c.value for c in bad]}")
    marks = paths.net_increments(chans)
    label = chans[0] if len(chans) == 1 else Channel.QLC_JUMP
    return JumpStream(paths.grid, marks, label)


@dataclass(frozen=True, eq=False)
class PoissonCompensator:
    """``nu(dt, dx) = intensity * dt * rho(dx)`` away from declared predictable times."""

    intensity: float
    mark_mean: np.ndarray
    acc_steps: np.ndarray | None = None

    def drift(self, grid: TimeGrid) -> np.ndarray:
        acc = np.zeros(grid.n_steps, dtype=bool) if self.acc_steps is None else self.acc_steps
        rate = np.where(acc, 0.0, self.intensity * grid.dt)
        return -rate[:, None] * np.atleast_1d(np.asarray(self.mark_mean, dtype=float))[None, :]


@dataclass(frozen=True)
class AccessibleCompensator:
    """Zero-mean marks at predictable times: the compensator vanishes."""

    dim: int

    def drift(self, grid: TimeGrid) -> np.ndarray:
        return np.zeros((grid.n_steps, self.dim))


@dataclass(frozen=True, eq=False)
class DriftCompensator:
    """A precomputed deterministic compensator, one ``(K, d)`` drift per step."""

    values: np.ndarray

    @classmethod
    def from_model(cls, model: GridModel) -> "DriftCompensator":
        return cls(model.compensator_drift())

    def drift(self, grid: TimeGrid) -> np.ndarray:
        if self.values.shape[0] != grid.n_steps:
            raise ValueError("compensator and grid disagree on the number of steps")
        return self.values


def compensate(stream: JumpStream, model) -> LabeledPaths:
    """Compensated jump martingale: the marks on their jump channel minus the compensator.

    ``model`` is any object with ``drift(grid) -> (K, d)``; a nonzero drift goes
    on the ``QLC_DRIFT`` channel.
    """
    n, K, d = stream.marks.shape
    if K != stream.grid.n_steps:
        raise ValueError("stream and grid disagree on the number of steps")
    drift = np.asarray(model.drift(stream.grid), dtype=float)
    if drift.shape != (K, d):
        raise ValueError(f"compensator drift must have shape {(K, d)}, got {drift.shape}")
    incs = {stream.channel: stream.marks}
    if np.any(drift != 0):
        incs[Channel.QLC_DRIFT] = np.broadcast_to(drift, (n, K, d)).copy()
    return LabeledPaths(stream.grid, np.zeros((n, d)), incs)


def compensate_tree(jumps: AdaptedProcess) -> AdaptedProcess:
    """``A - V`` for an adapted process ``A`` with ``A_0 = 0`` and its exact compensator ``V``."""
    return jumps - discrete_compensator(jumps)


def reconstruct_from_jumps(paths: LabeledPaths, model: GridModel | None = None) -> LabeledPaths:
    """Rebuild a purely discontinuous path from its jumps and the compensator of its jump law."""
    if Channel.CONT in paths.increments and np.any(paths.increments[Channel.CONT] != 0):
        raise ValueError("path has a continuous part; reconstruction needs a purely discontinuous path")
    if np.any(paths.initial != 0):
        raise ValueError("reconstruction expects M_0 = 0")
    qlc = jump_measure(paths, [Channel.QLC_JUMP])
    acc = jump_measure(paths, [Channel.ACC_JUMP])
    zero = AccessibleCompensator(paths.dim)
    qlc_part = compensate(qlc, zero if model is None else DriftCompensator.from_model(model))
    out = qlc_part + compensate(acc, zero)
    return LabeledPaths(paths.grid, out.initial, out.increments, paths.acc_steps, paths.space)


def reconstruct_tree(mart: AdaptedProcess) -> AdaptedProcess:
    """Tree analogue: compensate the pure-jump process of increments of ``mart``."""
    jumps = mart - mart.paths[:, :1]
    return compensate_tree(jumps) + mart.paths[:, :1]


# -- transforms ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransformCoeffs:
    """Scalar coefficients ``a_0..a_K``; ``a`` has shape ``(K + 1,)`` or ``(n, K + 1)``.

    ``a_k`` multiplies the increment ending at index ``k`` and must be computable
    from the path strictly before ``k``; ``a_0`` multiplies ``M_0``.
    """

    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))

    def bounded(self, bound: float = 1.0) -> bool:
        return bool(np.all(np.abs(self.a) <= bound))

    def is_binary(self) -> bool:
        return bool(np.isin(self.a, (0.0, 1.0)).all())


def apply_transform(mart, coeffs: TransformCoeffs | np.ndarray):
    """Predictable transform ``d(TM)_k = a_k dM_k``, ``(TM)_0 = a_0 M_0``.

    Accepts an :class:`AdaptedProcess` (predictability is checked on the
    tree), a :class:`LabeledPaths` batch (every channel is scaled) or a raw
    value array ``(..., K + 1, d)``.
    """
    a = coeffs.a if isinstance(coeffs, TransformCoeffs) else np.asarray(coeffs, dtype=float)
    if isinstance(mart, AdaptedProcess):
        a_full = np.broadcast_to(a, (mart.tree.n_atoms, mart.depth + 1))
        probe = AdaptedProcess(mart.tree, a_full[:, :, None], check=False)
        if not is_predictable(probe):
            raise ValueError("transform coefficients are not predictable on this tree")
        return mart.replace(_transform_values(mart.paths, a_full))
    if isinstance(mart, LabeledPaths):
        K = mart.n_steps
        a_full = np.broadcast_to(a, (mart.n_paths, K + 1))
        incs = {ch: x * a_full[:, 1:, None] for ch, x in mart.increments.items()}
        return LabeledPaths(mart.grid, mart.initial * a_full[:, :1], incs, mart.acc_steps, mart.space)
    return _transform_values(np.asarray(mart, dtype=float), a)


def _transform_values(values: np.ndarray, a: np.ndarray) -> np.ndarray:
    K1 = values.shape[-2]
    if a.shape[-1] != K1:
        raise ValueError(f"need {K1} coefficients, got {a.shape[-1]}")
    a = np.broadcast_to(a, values.shape[:-1])
    out = np.empty_like(values)
    out[..., 0, :] = a[..., 0, None] * values[..., 0, :]
    out[..., 1:, :] = a[..., 1:, None] * np.diff(values, axis=-2)
    return np.cumsum(out, axis=-2)


def alternating(n_steps: int, start: int = 1) -> TransformCoeffs:
    """``a_0 = 0`` and ``a_k`` alternating 1, 0, 1, ... from ``start`` (1 or 0)."""
    a = np.zeros(n_steps + 1)
    a[1:] = (np.arange(n_steps) + (1 - start)) % 2 == 0
    return TransformCoeffs(a)


def hit_and_freeze(values, level: float, space: NormedSpace) -> TransformCoeffs:
    """``a_k = 1`` until the path has reached norm ``level`` strictly before ``k``, then 0."""
    v = np.asarray(values, dtype=float)
    hit = np.maximum.accumulate(space.norm(v) >= level, axis=-1)
    a = np.ones(v.shape[:-1])
    a[..., 1:] = ~hit[..., :-1]
    return TransformCoeffs(a)


def sign_flip_after(values, level: float, space: NormedSpace) -> TransformCoeffs:
    """``a_k = 1`` before the path reaches ``level``, ``-1`` afterwards."""
    c = hit_and_freeze(values, level, space).a
    return TransformCoeffs(2.0 * c - 1.0)


def random_predictable(tree, rng: np.random.Generator, binary: bool = False) -> TransformCoeffs:
    """One random coefficient per level-(k-1) block for every step k."""
    cols = [np.full(tree.n_atoms, 1.0)]
    for k in range(1, tree.depth + 1):
        nb = tree.n_blocks(k - 1)
        draw = rng.integers(0, 2, nb).astype(float) if binary else rng.uniform(-1.0, 1.0, nb)
        cols.append(tree.expand(k - 1, draw))
    return TransformCoeffs(np.stack(cols, axis=1))


# -- subordination -------------------------------------------------------------

def is_differentially_subordinate(n_values, m_values, functional, tol: float = 1e-12) -> np.ndarray:
    """Per-path test of ``<N, x*>`` being differentially subordinate to ``<M, x*>``.

    Checks ``|<N_0, x*>| <= |<M_0, x*>|`` and stepwise quadratic-variation
    dominance, which is equivalent to dominance over all pairs ``s <= t``.
    """
    n_values = np.asarray(n_values, dtype=float)
    m_values = np.asarray(m_values, dtype=float)
    if n_values.shape != m_values.shape:
        raise ValueError("N and M must share grid and dimension")
    x = np.asarray(functional, dtype=float)
    n0 = np.abs(n_values[..., 0, :] @ x)
    m0 = np.abs(m_values[..., 0, :] @ x)
    dn = np.diff(quadratic_variation(n_values, x), axis=-1)
    dm = np.diff(quadratic_variation(m_values, x), axis=-1)
    return (n0 <= m0 + tol) & np.all(dn <= dm + tol, axis=-1)


def is_weakly_differentially_subordinate(n_values, m_values, duals: DualSet, tol: float = 1e-12) -> np.ndarray:
    ok = None
    for x in duals:
        r = is_differentially_subordinate(n_values, m_values, x, tol)
        ok = r if ok is None else ok & r
    return ok
