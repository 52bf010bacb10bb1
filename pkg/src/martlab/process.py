"""Grid-time cadlag paths with labeled increment channels.

Path functionals (running supremum, variation, quadratic variation, hitting
times, stopping and pre-stopping) act on plain value arrays of shape
``(..., K + 1, d)``, index ``k`` holding ``M_{t_k}``.  They serve both the grid
backend (rows are simulated paths) and the exact backend (rows are atoms).

A stopping time is an integer array over the leading axes with values in
``0..K``; the sentinel ``K + 1`` stands for ``+inf``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from martlab.space import NormedSpace


class Channel(str, enum.Enum):
    CONT = "CONT"
    QLC_JUMP = "QLC_JUMP"
    QLC_DRIFT = "QLC_DRIFT"
    ACC_JUMP = "ACC_JUMP"


ALL_CHANNELS = tuple(Channel)
JUMP_CHANNELS = (Channel.QLC_JUMP, Channel.ACC_JUMP)
QLC_CHANNELS = (Channel.QLC_JUMP, Channel.QLC_DRIFT)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ValueError("times must be a non-empty 1-d array")
        if t[0] != 0.0:
            raise ValueError("grid must start at t_0 = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("grid times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, horizon: float, steps: int) -> "TimeGrid":
        if horizon <= 0 or steps < 1:
            raise ValueError("need horizon > 0 and steps >= 1")
        return cls(np.linspace(0.0, horizon, steps + 1))

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def mesh(self) -> float:
        return float(self.dt.max()) if self.n_steps else 0.0

    def index_of(self, t: float, tol: float = 1e-12) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the grid")
        return k

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    __hash__ = None  # type: ignore[assignment]


class LabeledPaths:
    """A batch of ``n`` grid paths sharing a grid, a space and declared predictable times.

    ``increments[ch]`` has shape ``(n, K, d)``; entry ``k - 1`` is the channel's
    contribution to the step ending at ``t_k``.  ``acc_steps`` is a boolean mask
    over steps ``1..K`` (stored with length ``K``) marking the grid times declared
    predictable; time 0 is always predictable and carries ``initial``.
    """

    def __init__(self, grid: TimeGrid, initial, increments: dict, acc_steps=None,
                 space: NormedSpace | None = None):
        initial = np.asarray(initial, dtype=float)
        if initial.ndim == 1:
            initial = initial[None, :]
        n, d = initial.shape
        K = grid.n_steps
        incs = {}
        for ch, arr in increments.items():
            ch = Channel(ch)
            a = np.asarray(arr, dtype=float)
            if a.ndim == 2 and n == 1:
                a = a[None]
            if a.shape != (n, K, d):
                raise ValueError(f"{ch.value}: expected increments of shape {(n, K, d)}, got {a.shape}")
            incs[ch] = a
        if acc_steps is None:
            acc = np.zeros(K, dtype=bool)
        else:
            acc = np.asarray(acc_steps, dtype=bool)
            if acc.shape != (K,):
                raise ValueError(f"acc_steps must be a mask of length {K}")
        self.grid = grid
        self.initial = initial
        self.increments = incs
        self.acc_steps = acc
        self.space = space if space is not None else NormedSpace(d, 2.0)
        if self.space.dim != d:
            raise ValueError("space dimension does not match path dimension")

    # -- shape -----------------------------------------------------------
    @property
    def n_paths(self) -> int:
        return self.initial.shape[0]

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def dim(self) -> int:
        return self.initial.shape[1]

    @property
    def channels(self) -> tuple[Channel, ...]:
        return tuple(ch for ch in ALL_CHANNELS if ch in self.increments)

    def channel(self, ch: Channel) -> np.ndarray:
        if ch in self.increments:
            return self.increments[ch]
        return np.zeros((self.n_paths, self.n_steps, self.dim))

    def _empty_like(self, initial, increments) -> "LabeledPaths":
        return LabeledPaths(self.grid, initial, increments, self.acc_steps, self.space)

    # -- values ----------------------------------------------------------
    def net_increments(self, channels=None) -> np.ndarray:
        chans = self.channels if channels is None else tuple(Channel(c) for c in channels)
        out = np.zeros((self.n_paths, self.n_steps, self.dim))
        for ch in chans:
            if ch in self.increments:
                out += self.increments[ch]
        return out

    def values(self, channels=None, initial: bool = True) -> np.ndarray:
        """Cumulative values ``(n, K + 1, d)`` of the selected channels."""
        out = np.empty((self.n_paths, self.n_steps + 1, self.dim))
        out[:, 0] = self.initial if initial else 0.0
        np.cumsum(self.net_increments(channels), axis=1, out=out[:, 1:])
        out[:, 1:] += out[:, :1]
        return out

    def select(self, channels, initial: bool = False) -> "LabeledPaths":
        chans = tuple(Channel(c) for c in channels)
        incs = {ch: self.increments[ch] for ch in chans if ch in self.increments}
        init = self.initial if initial else np.zeros_like(self.initial)
        return self._empty_like(init, incs)

    def path(self, i: int) -> "LabeledPaths":
        return self._empty_like(self.initial[i:i + 1], {ch: a[i:i + 1] for ch, a in self.increments.items()})

    def __add__(self, other: "LabeledPaths") -> "LabeledPaths":
        if self.grid != other.grid or self.n_paths != other.n_paths or self.dim != other.dim:
            raise ValueError("can only add path batches on the same grid with equal shapes")
        incs = dict(self.increments)
        for ch, a in other.increments.items():
            incs[ch] = incs[ch] + a if ch in incs else a
        out = LabeledPaths(self.grid, self.initial + other.initial, incs,
                           self.acc_steps | other.acc_steps, self.space)
        return out

    def scaled(self, c: float) -> "LabeledPaths":
        return self._empty_like(self.initial * c, {ch: a * c for ch, a in self.increments.items()})

    # -- stopping --------------------------------------------------------
    def stopped(self, tau) -> "LabeledPaths":
        """Freeze every channel after step ``tau`` (inclusive of the jump at tau)."""
        tau = _as_tau(tau, self.n_paths)
        keep = np.arange(1, self.n_steps + 1)[None, :] <= tau[:, None]
        return self._empty_like(self.initial, {ch: a * keep[:, :, None] for ch, a in self.increments.items()})

    def pre_stopped(self, tau) -> "LabeledPaths":
        """Freeze strictly before ``tau``; identically zero where ``tau == 0``."""
        tau = _as_tau(tau, self.n_paths)
        keep = np.arange(1, self.n_steps + 1)[None, :] < tau[:, None]
        init = np.where((tau > 0)[:, None], self.initial, 0.0)
        return self._empty_like(init, {ch: a * keep[:, :, None] for ch, a in self.increments.items()})

    # -- validation ------------------------------------------------------
    def validate(self, mesh_bound: float | None = None) -> None:
        """Raise ``ValueError`` if the channel invariants are violated."""
        acc = self.acc_steps
        if Channel.ACC_JUMP in self.increments:
            off = np.abs(self.increments[Channel.ACC_JUMP][:, ~acc]).max(initial=0.0)
            if off > 0:
                raise ValueError("ACC_JUMP increments found outside the declared predictable times")
        if Channel.QLC_JUMP in self.increments:
            on = np.abs(self.increments[Channel.QLC_JUMP][:, acc]).max(initial=0.0)
            if on > 0:
                raise ValueError("QLC_JUMP increments found at a declared predictable time")
        if mesh_bound is not None:
            for ch in (Channel.CONT, Channel.QLC_DRIFT):
                if ch in self.increments and self.space.norm(self.increments[ch]).max(initial=0.0) > mesh_bound:
                    raise ValueError(f"{ch.value} increments exceed the mesh bound {mesh_bound}")

    # -- export ----------------------------------------------------------
    def to_csv(self, fh, path_index: int = 0) -> None:
        """Write one path as rows ``(time, channel, x1..xd)``; zero rows are skipped."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "channel"] + [f"x{j + 1}" for j in range(self.dim)])
        w.writerow([repr(0.0), "INITIAL"] + [repr(float(x)) for x in self.initial[path_index]])
        for k in range(self.n_steps):
            for ch in self.channels:
                v = self.increments[ch][path_index, k]
                if np.any(v != 0):
                    w.writerow([repr(float(self.grid.times[k + 1])), ch.value] + [repr(float(x)) for x in v])


def read_path_csv(fh, grid: TimeGrid) -> LabeledPaths:
    """Inverse of :meth:`LabeledPaths.to_csv` for a known grid."""
    rows = list(csv.reader(fh))
    d = len(rows[0]) - 2
    initial = np.zeros(d)
    incs: dict = {}
    for row in rows[1:]:
        t, ch, vec = float(row[0]), row[1], np.array([float(x) for x in row[2:]])
        if ch == "INITIAL":
            initial = vec
            continue
        k = grid.index_of(t)
        a = incs.setdefault(Channel(ch), np.zeros((1, grid.n_steps, d)))
        a[0, k - 1] += vec
    return LabeledPaths(grid, initial, incs)


def _as_tau(tau, n):
    tau = np.asarray(tau, dtype=np.int64)
    if tau.ndim == 0:
        tau = np.full(n, int(tau))
    return tau


# -- path functionals on value arrays ----------------------------------------

def never(values) -> int:
    """The ``+inf`` sentinel for paths with ``values.shape[-2] - 1`` steps."""
    return np.asarray(values).shape[-2]


def value_at(paths: LabeledPaths, k: int, channels=None, initial: bool = True) -> np.ndarray:
    if not 0 <= k <= paths.n_steps:
        raise IndexError(f"index {k} out of range 0..{paths.n_steps}")
    return paths.values(channels, initial)[:, k]


def running_sup(values, space: NormedSpace) -> np.ndarray:
    """``sup_{j<=k} ||M_j||`` for every k."""
    return np.maximum.accumulate(space.norm(values), axis=-1)


def variation(values, space: NormedSpace) -> np.ndarray:
    """``||M_0|| + sum_{j<=k} ||dM_j||`` for every k."""
    v = np.asarray(values, dtype=float)
    out = np.empty(v.shape[:-1])
    out[..., 0] = space.norm(v[..., 0, :])
    out[..., 1:] = space.norm(np.diff(v, axis=-2))
    return np.cumsum(out, axis=-1)


def quadratic_variation(values, functional) -> np.ndarray:
    """``sum_{j<=k} <dM_j, x*>^2`` for every k (zero at k = 0)."""
    v = np.asarray(values, dtype=float)
    p = v @ np.asarray(functional, dtype=float)
    out = np.zeros(p.shape)
    out[..., 1:] = np.cumsum(np.diff(p, axis=-1) ** 2, axis=-1)
    return out


def hit_time(values, level: float, space: NormedSpace) -> np.ndarray:
    """First index with ``||M_k|| >= level``; ``K + 1`` if none."""
    if not level > 0:
        raise ValueError("level must be positive")
    hit = space.norm(values) >= level
    first = np.argmax(hit, axis=-1)
    return np.where(hit.any(axis=-1), first, hit.shape[-1])


def stop(values, tau) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    K1 = v.shape[-2]
    idx = np.minimum(np.arange(K1), np.asarray(tau)[..., None])
    return np.take_along_axis(v, idx[..., None], axis=-2)


def pre_stop(values, tau) -> np.ndarray:
    """``M^{tau-}``: ``M_j`` for ``j < tau``, the left limit ``M_{tau-1}`` afterwards, zero if ``tau == 0``."""
    v = np.asarray(values, dtype=float)
    tau = np.asarray(tau)
    K1 = v.shape[-2]
    idx = np.minimum(np.arange(K1), np.maximum(tau, 1)[..., None] - 1)
    out = np.take_along_axis(v, idx[..., None], axis=-2)
    return np.where((tau > 0)[..., None, None], out, 0.0)


def jump_at(values, tau) -> np.ndarray:
    """``dM_tau`` with ``dM_0 = M_0`` and ``dM_inf = 0``."""
    v = np.asarray(values, dtype=float)
    tau = np.asarray(tau)
    K1 = v.shape[-2]
    t = np.clip(tau, 0, K1 - 1)
    cur = np.take_along_axis(v, t[..., None, None], axis=-2)[..., 0, :]
    prev = np.take_along_axis(v, np.maximum(t - 1, 0)[..., None, None], axis=-2)[..., 0, :]
    out = np.where((tau == 0)[..., None], cur, cur - prev)
    return np.where((tau >= K1)[..., None], 0.0, out)


def single_jump(values, tau) -> np.ndarray:
    """The path ``dM_tau * 1_{[tau, inf)}``."""
    v = np.asarray(values, dtype=float)
    tau = np.asarray(tau)
    on = np.arange(v.shape[-2]) >= tau[..., None]
    return jump_at(v, tau)[..., None, :] * on[..., None]


def sup_distance(a, b, space: NormedSpace) -> np.ndarray:
    return space.norm(np.asarray(a) - np.asarray(b)).max(axis=-1)


def is_infinite(tau, values) -> np.ndarray:
    return np.asarray(tau) >= never(values)


def time_of(tau, grid: TimeGrid) -> np.ndarray:
    """Grid time of a stopping index; ``inf`` for the sentinel."""
    tau = np.asarray(tau)
    t = np.append(grid.times, math.inf)
    return t[np.minimum(tau, grid.n_steps + 1)]
