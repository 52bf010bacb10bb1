"""Gundy decomposition at a level and the canonical (continuous / quasi-left
continuous / accessible) decomposition, on trees and on labelled grid paths.

The Gundy construction at level ``lam`` works on value arrays ``(n, K + 1, d)``:

* ``tau`` is the first index with ``||M|| >= lam / 2``;
* ``N`` is the single jump of ``M`` at ``tau`` and ``V`` the compensator of ``N - N_0``;
* ``sigma`` is the first index with ``||V|| >= lam``;
* ``m1 = M^{(sigma ^ tau)-} + V^{sigma-} - M_0 1{tau > 0}``,
  ``m2 = (M - M^tau) + X - X^{sigma-}`` with ``X = M^{tau-} + V``,
  ``m3 = M_0 1{tau > 0} + N - V``.

``m2`` is assembled from its own formula rather than as ``M - m1 - m3`` so
that paths on which it vanishes are exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from martlab.finprob import AdaptedProcess, discrete_compensator
from martlab.generators import CompensatedPoisson, AccessibleSeries, GridModel
from martlab.process import Channel, LabeledPaths, hit_time, pre_stop, single_jump, stop
from martlab.space import NormedSpace

QLC = (Channel.QLC_JUMP, Channel.QLC_DRIFT)


@dataclass(frozen=True, eq=False)
class GundyTriple:
    """Parts of the Gundy decomposition.

    On the tree backend ``m1, m2, m3, n, v`` are :class:`AdaptedProcess`;
    on grids they are value arrays ``(n_paths, K + 1, d)``.  ``tau`` and
    ``sigma`` are index arrays with sentinel ``K + 1`` for never.
    """

    lam: float
    m1: object
    m2: object
    m3: object
    tau: np.ndarray
    sigma: np.ndarray
    n: object
    v: object

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(_values(x) for x in (self.m1, self.m2, self.m3))


def _values(x) -> np.ndarray:
    return x.paths if isinstance(x, AdaptedProcess) else x


def gundy_arrays(values: np.ndarray, lam: float, space: NormedSpace,
                 compensator: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]) -> dict:
    """Core construction on value arrays.

    ``compensator(values, tau, a)`` must return the compensator of the adapted
    process ``a = N - N_0`` (zero at index 0) as an array of ``a``'s shape.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    M = np.asarray(values, dtype=float)
    tau = hit_time(M, lam / 2.0, space)
    N = single_jump(M, tau)
    V = np.asarray(compensator(M, tau, N - N[:, :1]), dtype=float)
    sigma = hit_time(V, lam, space)
    m0 = np.where((tau > 0)[:, None, None], M[:, :1], 0.0)
    m0 = np.broadcast_to(m0, M.shape)
    m1 = pre_stop(M, np.minimum(sigma, tau)) + pre_stop(V, sigma) - m0
    X = pre_stop(M, tau) + V
    m2 = (M - stop(M, tau)) + X - pre_stop(X, sigma)
    m3 = m0 + N - V
    return dict(m1=m1, m2=m2, m3=m3, tau=tau, sigma=sigma, n=N, v=V)


def grid_jump_compensator(model: GridModel, lam: float) -> Callable:
    """Exact compensator of the jump at the first crossing of ``lam / 2``.

    With a state-independent step law ``sum_i p_i delta_{x_i}`` at step ``j``,
    ``E[dN_j | F_{j-1}] = 1{tau > j - 1} sum_i p_i x_i 1{||M_{j-1} + x_i|| >= lam / 2}``.
    """
    laws = [model.step_law(k) for k in range(1, model.grid.n_steps + 1)]
    if any(law is None for law in laws):
        raise ValueError("compensator unavailable: the model has a step without finite support")
    space = model.space

    def compensator(M, tau, _a):
        n, K1, d = M.shape
        if K1 != len(laws) + 1 or d != space.dim:
            raise ValueError("paths do not match the model grid or dimension")
        dv = np.zeros((n, K1, d))
        for j, law in enumerate(laws, start=1):
            alive = tau > j - 1
            if not alive.any():
                continue
            prev = M[alive, j - 1]
            cand = prev[:, None, :] + law.points[None, :, :]
            hit = space.norm(cand) >= lam / 2.0
            dv[alive, j] = (hit * law.probs[None, :]) @ law.points
        return np.cumsum(dv, axis=1)

    return compensator


def gundy(mart, lam: float, model: GridModel | None = None) -> GundyTriple:
    """Gundy decomposition of a tree martingale or of grid paths drawn from ``model``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if isinstance(mart, AdaptedProcess):
        def comp(_m, _tau, a):
            return discrete_compensator(AdaptedProcess(mart.tree, a, mart.space, check=False)).paths

        parts = gundy_arrays(mart.paths, lam, mart.space, comp)
        wrap = {k: mart.replace(v) for k, v in parts.items() if k not in ("tau", "sigma")}
        return GundyTriple(lam, tau=parts["tau"], sigma=parts["sigma"], **wrap)
    if isinstance(mart, LabeledPaths):
        if model is None:
            raise ValueError("compensator unavailable: grid paths need the model they were drawn from")
        if model.grid != mart.grid or model.space.dim != mart.dim:
            raise ValueError("paths do not match the model grid or dimension")
        parts = gundy_arrays(mart.values(), lam, mart.space, grid_jump_compensator(model, lam))
        return GundyTriple(lam, **parts)
    raise TypeError(f"unsupported process type {type(mart).__name__}")


# -- canonical decomposition ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class CanonicalTriple:
    """``mc`` continuous, ``mq`` quasi-left continuous, ``ma`` accessible jumps plus ``M_0``."""

    mc: object
    mq: object
    ma: object

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(x.values() if isinstance(x, LabeledPaths) else _values(x) for x in (self.mc, self.mq, self.ma))


def canonical_from_labels(paths: LabeledPaths) -> CanonicalTriple:
    """Route channels: CONT to ``mc``, QLC jumps and drift to ``mq``, ACC jumps and ``M_0`` to ``ma``."""
    paths.validate()
    return CanonicalTriple(
        paths.select([Channel.CONT]),
        paths.select(QLC),
        paths.select([Channel.ACC_JUMP], initial=True),
    )


def meyer_yoeurp(paths: LabeledPaths) -> tuple[LabeledPaths, LabeledPaths]:
    """Split into the continuous part and the purely discontinuous remainder."""
    paths.validate()
    return paths.select([Channel.CONT]), paths.select(QLC + (Channel.ACC_JUMP,), initial=True)


def yoeurp(md: LabeledPaths) -> tuple[LabeledPaths, LabeledPaths]:
    """Split a purely discontinuous path into its QLC and accessible parts."""
    if Channel.CONT in md.increments and np.any(md.increments[Channel.CONT] != 0):
        raise ValueError("yoeurp needs a purely discontinuous path; found a continuous part")
    md.validate()
    return md.select(QLC), md.select([Channel.ACC_JUMP], initial=True)


def canonical_discrete(mart: AdaptedProcess) -> CanonicalTriple:
    """On a discrete filtration every jump is accessible: ``(0, 0, M)``."""
    zero = mart.replace(np.zeros_like(mart.paths))
    return CanonicalTriple(zero, zero, mart)


# -- truncation diagnostic ------------------------------------------------------

def _large_mark_mass(marks, level: float, space: NormedSpace) -> float:
    if not marks.finite:
        raise ValueError("truncation times need finitely supported marks")
    law = marks.law
    r = space.norm(law.points)
    return float(np.sum(law.probs * r * (r > level)))


def truncation_times(model: GridModel, levels) -> np.ndarray:
    """For each level ``c``: first grid index where ``int ||x|| 1{||x|| > c} dnu > 1``.

    The jump compensators of the supported models are deterministic, so one
    index per level serves every path; ``K + 1`` means never on the horizon.
    """
    grid, acc = model.grid, model.acc
    out = []
    for c in np.atleast_1d(np.asarray(levels, dtype=float)):
        rate = np.zeros(grid.n_steps)
        for w, comp in model.components:
            if w == 0:
                continue
            if isinstance(comp, CompensatedPoisson):
                rate += comp.jump_probs(grid, acc) * _large_mark_mass(comp.marks, c / abs(w), model.space) * abs(w)
            elif isinstance(comp, AccessibleSeries):
                rate += comp.acc_steps(grid) * _large_mark_mass(comp.marks, c / abs(w), model.space) * abs(w)
        over = np.cumsum(rate) > 1.0
        out.append(int(np.argmax(over)) + 1 if over.any() else grid.n_steps + 1)
    return np.array(out)
