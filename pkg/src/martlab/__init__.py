"""Desk-scale laboratory for martingale decompositions and their inequalities.

Two backends share one vocabulary of paths:

* the exact backend (:mod:`martlab.finprob`): finite filtrations as refining
  partitions, with exact conditional expectations and compensators;
* the grid backend (:mod:`martlab.process`, :mod:`martlab.generators`):
  ensembles of cadlag paths on a time grid whose increments carry channel
  labels (continuous, quasi-left continuous jump/drift, accessible jump).
"""

__version__ = "0.1.0"

from martlab.space import DualSet, NormedSpace, norm, separating_set
from martlab.finprob import (
    AdaptedProcess,
    FiltrationTree,
    cond_expect,
    discrete_compensator,
    is_martingale,
)
from martlab.process import Channel, LabeledPaths, TimeGrid

__all__ = [
    "AdaptedProcess",
    "Channel",
    "DualSet",
    "FiltrationTree",
    "LabeledPaths",
    "NormedSpace",
    "TimeGrid",
    "cond_expect",
    "discrete_compensator",
    "is_martingale",
    "norm",
    "separating_set",
]
