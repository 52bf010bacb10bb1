"""Exact and Monte Carlo checks of the martingale inequalities, plus the UMD prober.

Every bound check is one-sided and conservative: on trees the exact value is
compared with the bound (up to floating-point rounding, ``EXACT_RTOL``); on
simulated ensembles the adverse end of a 95% interval is used on both sides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from martlab.decompose import canonical_from_labels, gundy
from martlab.finprob import MAX_ATOMS, AdaptedProcess, FiltrationTree, discrete_compensator
from martlab.generators import (
    AgreementWitness,
    BurkholderEmbedding,
    GridModel,
    PaleyWalshSpec,
    TablePaleyWalsh,
)
from martlab.process import running_sup, variation
from martlab.space import NormedSpace
from martlab.stochcalc import (
    TransformCoeffs,
    apply_transform,
    hit_and_freeze,
    reconstruct_tree,
    sign_flip_after,
)

Z95 = 1.959963984540054
EXACT_RTOL = 1e-12
GUNDY_CONSTANTS = {"m1_sup": 2.0, "m1_mean": 5.0, "m2_tail": 4.0, "m3_variation": 7.0}
PARTS = ("c", "q", "a")


def transform_constant(norm_t: float = 1.0, p: float = 2.0) -> float:
    """Weak-type budget ``26 K p / (p - 1) + 28`` for a transform of norm ``K`` on ``L^p``."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    return 26.0 * norm_t * p / (p - 1.0) + 28.0


def lambda_grid(center: float, points: int = 40, decades: float = 4.0) -> np.ndarray:
    """Log-spaced levels spanning ``decades`` decades centred on ``center``."""
    if not center > 0:
        center = 1.0
    half = decades / 2.0
    return center * np.logspace(-half, half, points)


# -- ensembles and estimators ------------------------------------------------

@dataclass(frozen=True, eq=False)
class Ensemble:
    """``n`` i.i.d. paths of ``model``, drawn in chunks from spawned seed sequences."""

    model: GridModel
    n: int
    seed: int
    chunk: int = 10_000
    provenance: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("empty ensemble")
        if self.chunk < 1:
            raise ValueError("chunk must be >= 1")

    @property
    def sizes(self) -> list[int]:
        full, rest = divmod(self.n, self.chunk)
        return [self.chunk] * full + ([rest] if rest else [])

    def chunks(self) -> Iterator:
        children = np.random.SeedSequence(self.seed).spawn(len(self.sizes))
        for size, child in zip(self.sizes, children):
            yield self.model.sample(size, child)

    def collect(self, statistic: Callable) -> np.ndarray:
        """Concatenate a per-path statistic over all chunks, in chunk order."""
        return np.concatenate([np.asarray(statistic(c)) for c in self.chunks()], axis=0)


@dataclass(frozen=True)
class TailEstimate:
    p: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n: int
    exact: bool


def wilson(count, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Two-sided 95% Wilson interval for ``count`` successes out of ``n``."""
    if n < 1:
        raise ValueError("empty ensemble")
    lo, hi = proportion_confint(np.asarray(count), n, alpha=0.05, method="wilson")
    return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)


def mean_ci(x, weights=None) -> tuple[float, float, float]:
    """Mean with a 95% normal interval; exact (degenerate) when ``weights`` are given."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty ensemble")
    if weights is not None:
        m = float(np.dot(weights, x))
        return m, m, m
    m = float(x.mean())
    half = Z95 * float(x.std(ddof=1)) / math.sqrt(x.size) if x.size > 1 else math.inf
    return m, m - half, m + half


def estimate_tail(ens, statistic: Callable | None, level) -> TailEstimate:
    """``P(statistic > level)`` with a Wilson interval, or exactly on a tree.

    ``ens`` is an :class:`Ensemble`, an :class:`AdaptedProcess` (exact, atoms
    weighted by their probabilities) or a plain array of statistic values.
    """
    level = np.asarray(level, dtype=float)
    if isinstance(ens, AdaptedProcess):
        x = np.asarray(statistic(ens), dtype=float)
        p = np.array([ens.weights[x > lv].sum() for lv in np.atleast_1d(level)]).reshape(level.shape)
        return TailEstimate(p, p, p, ens.tree.n_atoms, True)
    if isinstance(ens, Ensemble):
        x = ens.collect(statistic)
    else:
        x = np.asarray(ens if statistic is None else statistic(ens), dtype=float)
    if x.size == 0:
        raise ValueError("empty ensemble")
    counts = (x[:, None] > np.atleast_1d(level)[None, :]).sum(axis=0).reshape(level.shape)
    lo, hi = wilson(counts, x.size)
    return TailEstimate(counts / x.size, lo, hi, x.size, False)


def weak_l1_exact(x, weights) -> tuple[float, float]:
    """``sup_lam lam P(X > lam)`` for a discrete ``X``, with the maximizing level.

    The supremum is approached from below at an atom value ``x_i``, where it
    equals ``x_i P(X >= x_i)``.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(-x, kind="stable")
    xs, ws = x[order], w[order]
    tail = np.cumsum(ws)
    # ties share the tail mass of their last copy
    last = np.r_[xs[1:] != xs[:-1], True]
    vals = np.where(last, xs * tail, 0.0)
    i = int(np.argmax(vals))
    return float(vals[i]), float(xs[i])


# -- reports --------------------------------------------------------------------

def _num(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass
class CheckResult:
    """One inequality ``estimate <= bound`` (``sense="ge"``: ``estimate > bound``) and its verdict.

    ``lower``/``upper`` bracket the estimate (equal to it when exact); ``slack``
    is the margin left at the adverse end.
    """

    name: str
    bound: float
    estimate: float
    lower: float
    upper: float
    passed: bool
    n: int
    exact: bool
    constant: float | None = None
    vacuous: bool = False
    note: str = ""
    extra: dict = field(default_factory=dict)
    sense: str = "le"

    @property
    def slack(self) -> float:
        return self.lower - self.bound if self.sense == "ge" else self.bound - self.upper

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "bound": _num(self.bound),
            "constant": _num(self.constant),
            "estimate": _num(self.estimate),
            "ci": [_num(self.lower), _num(self.upper)],
            "slack": _num(self.slack),
            "sense": self.sense,
            "passed": bool(self.passed),
            "n": int(self.n),
            "exact": bool(self.exact),
            "vacuous": bool(self.vacuous),
        }
        if self.note:
            out["note"] = self.note
        if self.extra:
            out["extra"] = {k: _jsonable(v) for k, v in self.extra.items()}
        return out


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return _num(v)
    return v


def le_check(name: str, estimate: float, bound: float, *, n: int, exact: bool, lower=None, upper=None,
             constant=None, note: str = "", vacuous: bool = False, **extra) -> CheckResult:
    """``estimate <= bound``; exact checks allow ``EXACT_RTOL`` relative rounding."""
    lower = estimate if lower is None else lower
    upper = estimate if upper is None else upper
    if exact:
        ok = upper <= bound + EXACT_RTOL * max(1.0, abs(bound))
    else:
        ok = upper <= bound
    return CheckResult(name, float(bound), float(estimate), float(lower), float(upper), bool(ok), int(n),
                       exact, constant, vacuous, note, dict(extra))


@dataclass
class VerificationReport:
    name: str
    checks: list[CheckResult]
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "params": _jsonable(self.params),
            "checks": [c.to_dict() for c in self.checks],
        }


# -- Gundy -----------------------------------------------------------------------

def _gundy_path_stats(values: np.ndarray, triple, space: NormedSpace) -> dict:
    m1, m2, m3 = triple.arrays()
    return {
        "norm_m": space.norm(values),
        "norm_m1": space.norm(m1),
        "m2_alive": running_sup(m2, space) > 0,
        "var_m3": variation(m3, space),
        "add_err": float(np.abs(m1 + m2 + m3 - values).max(initial=0.0)),
        "scale": max(1.0, float(np.abs(values).max(initial=0.0))),
    }


def _worst(lhs: np.ndarray, rhs: np.ndarray):
    """Index of the smallest slack ``rhs - lhs`` among entries with ``rhs > 0``."""
    live = rhs > 0
    if not live.any():
        return None
    slack = np.where(live, rhs - lhs, np.inf)
    return int(np.argmin(slack))


def check_gundy_bounds(mart, lams=None, ens: Ensemble | None = None,
                       constants: dict | None = None) -> VerificationReport:
    """Evaluate the four Gundy bounds (and additivity) for every level in ``lams``.

    ``mart`` is a tree martingale (exact, every time index) or ``None`` with an
    :class:`Ensemble` ``ens`` (terminal time, 95% adverse endpoints).
    ``constants`` overrides the bound constants, for failure-path tests.
    """
    const = dict(GUNDY_CONSTANTS, **(constants or {}))
    if mart is not None:
        return _gundy_tree(mart, lams, const)
    if ens is None:
        raise ValueError("need a tree martingale or an ensemble")
    return _gundy_mc(ens, lams, const)


def _gundy_tree(mart: AdaptedProcess, lams, const) -> VerificationReport:
    w = mart.weights
    e_m = w @ mart.space.norm(mart.paths)
    lams = lambda_grid(float(e_m[-1])) if lams is None else np.atleast_1d(np.asarray(lams, dtype=float))
    worst = {k: None for k in const}
    add_err, scale = 0.0, 1.0
    zero_ok = True
    for lam in lams:
        g = gundy(mart, float(lam))
        s = _gundy_path_stats(mart.paths, g, mart.space)
        add_err = max(add_err, s["add_err"])
        scale = s["scale"]
        rows = {
            "m1_sup": (s["norm_m1"].max(axis=0), np.full_like(e_m, const["m1_sup"] * lam)),
            "m1_mean": (w @ s["norm_m1"], const["m1_mean"] * e_m),
            "m2_tail": (lam * (w @ s["m2_alive"]), const["m2_tail"] * e_m),
            "m3_variation": (w @ s["var_m3"], const["m3_variation"] * e_m),
        }
        for key, (lhs, rhs) in rows.items():
            dead = rhs <= 0
            zero_ok &= bool(np.all(lhs[dead] <= EXACT_RTOL * scale))
            i = _worst(lhs, rhs)
            if i is None:
                continue
            cand = (float(rhs[i] - lhs[i]), float(lhs[i]), float(rhs[i]), float(lam), i)
            if worst[key] is None or cand[0] < worst[key][0]:
                worst[key] = cand
    checks = [le_check("gundy.additivity", add_err, 1e-12 * scale, n=mart.tree.n_atoms, exact=False,
                       note="max |m1 + m2 + m3 - M| over atoms, times and levels")]
    for key in const:
        if worst[key] is None:
            checks.append(le_check(f"gundy.{key}", 0.0, 0.0, n=mart.tree.n_atoms, exact=True,
                                   constant=const[key], vacuous=True))
            checks[-1].passed = zero_ok
            continue
        _, lhs, rhs, lam, t = worst[key]
        c = le_check(f"gundy.{key}", lhs, rhs, n=mart.tree.n_atoms, exact=True, constant=const[key],
                     lam=lam, time_index=t)
        c.passed = c.passed and zero_ok
        checks.append(c)
    return VerificationReport("gundy", checks, {"backend": "tree", "levels": len(lams)})


def _gundy_mc(ens: Ensemble, lams, const) -> VerificationReport:
    first = next(ens.chunks())
    if lams is None:
        lams = lambda_grid(float(first.space.norm(first.values()[:, -1]).mean()))
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    norm_end = []
    per_lam = [dict(m1_end=[], m2=[], var3=[], sup1=0.0) for _ in lams]
    add_err, scale = 0.0, 1.0
    for chunk in ens.chunks():
        v = chunk.values()
        norm_end.append(chunk.space.norm(v[:, -1]))
        for acc, lam in zip(per_lam, lams):
            g = gundy(chunk, float(lam), ens.model)
            s = _gundy_path_stats(v, g, chunk.space)
            add_err = max(add_err, s["add_err"])
            scale = max(scale, s["scale"])
            acc["sup1"] = max(acc["sup1"], float(s["norm_m1"].max()))
            acc["m1_end"].append(s["norm_m1"][:, -1])
            acc["m2"].append(s["m2_alive"][:, -1])
            acc["var3"].append(s["var_m3"][:, -1])
    e, e_lo, _ = mean_ci(np.concatenate(norm_end))
    n = ens.n
    worst: dict = {}
    for acc, lam in zip(per_lam, lams):
        m1m, _, m1_hi = mean_ci(np.concatenate(acc["m1_end"]))
        cnt = int(np.concatenate(acc["m2"]).sum())
        p_lo, p_hi = wilson(cnt, n)
        v3, _, v3_hi = mean_ci(np.concatenate(acc["var3"]))
        rows = {
            "m1_sup": (acc["sup1"], acc["sup1"], const["m1_sup"] * lam),
            "m1_mean": (m1m, m1_hi, const["m1_mean"] * e_lo),
            "m2_tail": (lam * cnt / n, lam * float(p_hi), const["m2_tail"] * e_lo),
            "m3_variation": (v3, v3_hi, const["m3_variation"] * e_lo),
        }
        for key, (est, hi, rhs) in rows.items():
            cand = (rhs - hi, est, hi, rhs, float(lam))
            if key not in worst or cand[0] < worst[key][0]:
                worst[key] = cand
    checks = [le_check("gundy.additivity", add_err, 1e-12 * scale, n=n, exact=False)]
    for key in const:
        _, est, hi, rhs, lam = worst[key]
        checks.append(le_check(f"gundy.{key}", est, rhs, n=n, exact=key == "m1_sup", upper=hi,
                               constant=const[key], lam=lam,
                               note="terminal time; bound uses the lower 95% end of E||M_T||"))
    return VerificationReport("gundy", checks, {"backend": "grid", "levels": len(lams), "mean_norm": e})


# -- canonical decomposition on ensembles ------------------------------------------

@dataclass(frozen=True, eq=False)
class CanonicalSummary:
    """Per-path statistics of ``M`` and its canonical parts, keyed by ``"M"``, ``"c"``, ``"q"``, ``"a"``.

    ``ends[k]`` terminal values ``(n, d)``; ``sups[k]`` running sup at the horizon;
    ``moves[k]`` values minus the time-0 value at the checkpoints ``(n, m, d)``;
    ``transforms[k]`` the sum of ``sign(X_{j-1} - X_0) dX_j`` per coordinate ``(n, d)``.
    """

    ends: dict
    sups: dict
    moves: dict
    transforms: dict
    checkpoints: np.ndarray
    additivity_error: float
    scale: float
    channels: dict
    space: NormedSpace

    @property
    def n(self) -> int:
        return self.ends["M"].shape[0]


def _signed_sum(values: np.ndarray) -> np.ndarray:
    rel = values - values[:, :1]
    return (np.sign(rel[:, :-1]) * np.diff(values, axis=1)).sum(axis=1)


def canonical_summary(ens: Ensemble, n_checkpoints: int = 4) -> CanonicalSummary:
    K = ens.model.grid.n_steps
    cps = np.unique(np.linspace(0, K, n_checkpoints + 1).round().astype(int)[1:])
    keys = ("M",) + PARTS
    ends, sups, moves, trans = ({k: [] for k in keys} for _ in range(4))
    add_err, scale = 0.0, 1.0
    channels: dict = {k: set() for k in PARTS}
    space = ens.model.space
    for chunk in ens.chunks():
        triple = canonical_from_labels(chunk)
        for k, part in zip(PARTS, (triple.mc, triple.mq, triple.ma)):
            channels[k] |= {c.value for c in part.channels if np.any(part.increments[c] != 0)}
        vals = {"M": chunk.values()}
        vals.update(zip(PARTS, triple.arrays()))
        add_err = max(add_err, float(np.abs(vals["c"] + vals["q"] + vals["a"] - vals["M"]).max()))
        scale = max(scale, float(np.abs(vals["M"]).max()))
        for k, v in vals.items():
            ends[k].append(v[:, -1])
            sups[k].append(running_sup(v, space)[:, -1])
            moves[k].append(v[:, cps] - v[:, :1])
            trans[k].append(_signed_sum(v))
    cat = lambda d: {k: np.concatenate(v, axis=0) for k, v in d.items()}  # noqa: E731
    return CanonicalSummary(cat(ends), cat(sups), cat(moves), cat(trans), cps, add_err, scale,
                            {k: sorted(v) for k, v in channels.items()}, space)


ALLOWED_CHANNELS = {"c": {"CONT"}, "q": {"QLC_JUMP", "QLC_DRIFT"}, "a": {"ACC_JUMP"}}


def check_canonical_structure(summary: CanonicalSummary) -> list[CheckResult]:
    out = [le_check("canonical.additivity", summary.additivity_error, 1e-12 * summary.scale,
                    n=summary.n, exact=False, note="max |mc + mq + ma - M|")]
    for k in PARTS:
        extra = set(summary.channels[k]) - ALLOWED_CHANNELS[k]
        c = le_check(f"canonical.single_channel.{k}", float(len(extra)), 0.0, n=summary.n, exact=True,
                     channels=summary.channels[k])
        out.append(c)
    return out


def martingale_ztest(samples: np.ndarray, name: str, threshold: float = 4.0) -> CheckResult:
    """Largest ``|mean| / standard error`` over the columns of ``samples`` must stay below ``threshold``."""
    x = np.asarray(samples, dtype=float).reshape(samples.shape[0], -1)
    n = x.shape[0]
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / math.sqrt(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(mean) / se, np.where(np.abs(mean) > 0, np.inf, 0.0))
    zmax = float(z.max(initial=0.0))
    return le_check(name, zmax, threshold, n=n, exact=False,
                    note=f"max |z| over {x.shape[1]} checkpoint and transform statistics")


def check_martingale_parts(summary: CanonicalSummary, threshold: float = 4.0) -> list[CheckResult]:
    out = []
    for k in ("M",) + PARTS:
        stats = np.concatenate([summary.moves[k].reshape(summary.n, -1), summary.transforms[k]], axis=1)
        out.append(martingale_ztest(stats, f"martingale.{k}", threshold))
    return out


def check_weak_l1_canonical(summary: CanonicalSummary, parts=PARTS, lams=None, budget: float | None = None,
                            norm_t: float = 1.0, p: float = 2.0) -> list[CheckResult]:
    """``sup_lam lam * (Wilson upper tail of part*) <= C * (lower end of E||M_T||)``."""
    C = transform_constant(norm_t, p) if budget is None else float(budget)
    e, e_lo, _ = mean_ci(summary.space.norm(summary.ends["M"]))
    lams = lambda_grid(e) if lams is None else np.atleast_1d(np.asarray(lams, dtype=float))
    out = []
    for k in parts:
        s = summary.sups[k]
        counts = (s[:, None] > lams[None, :]).sum(axis=0)
        _, hi = wilson(counts, summary.n)
        lhs = lams * hi
        i = int(np.argmax(lhs))
        est = float(lams[i] * counts[i] / summary.n)
        vac = e == 0
        out.append(le_check(f"weak_l1.{k}", est, C * max(e_lo, 0.0), n=summary.n, exact=False,
                            upper=float(lhs[i]), constant=C, vacuous=vac, lam=float(lams[i]),
                            ratio=float(lhs[i] / e) if e > 0 else None))
    return out


def weak_l1_curve(summary: CanonicalSummary, part: str, lams) -> dict:
    """Per-level tail estimate of ``part*`` with Wilson bounds, for CSV export."""
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    counts = (summary.sups[part][:, None] > lams[None, :]).sum(axis=0)
    lo, hi = wilson(counts, summary.n)
    return {"lambda": lams, "lam_p": lams * counts / summary.n, "lam_lo": lams * lo, "lam_hi": lams * hi}


def check_lp_bound(summary: CanonicalSummary, p: float = 2.0, part: str = "c",
                   beta: float | None = None) -> CheckResult:
    """``E||part_T||^p <= beta^p E||M_T||^p``; for Hilbert ``p = 2`` the Pythagoras identity instead."""
    space = summary.space
    total = space.norm(summary.ends["M"]) ** p
    if space.is_hilbert and p == 2 and beta is None:
        parts = sum(space.norm(summary.ends[k]) ** 2 for k in PARTS)
        diff = total - parts
        m = float(diff.mean())
        se = float(diff.std(ddof=1)) / math.sqrt(diff.size)
        z = abs(m) / se if se > 0 else (0.0 if m == 0 else math.inf)
        return le_check("lp.pythagoras", z, 3.0, n=summary.n, exact=False, constant=3.0,
                        note="|E||M||^2 - sum of parts| in standard errors",
                        total=float(total.mean()), parts=float(parts.mean()))
    if beta is None:
        raise ValueError("beta is unavailable for this space; supply it in the configuration")
    lhs, _, lhs_hi = mean_ci(space.norm(summary.ends[part]) ** p)
    rhs, rhs_lo, _ = mean_ci(total)
    return le_check(f"lp.{part}", lhs, beta**p * rhs_lo, n=summary.n, exact=False, upper=lhs_hi,
                    constant=beta**p, note="beta supplied by configuration")


# -- transforms on trees ------------------------------------------------------------

def check_weak_l1_transform(mart: AdaptedProcess, coeffs: TransformCoeffs, p: float = 2.0,
                            norm_t: float | None = None, budget: float | None = None) -> CheckResult:
    """Exact ``sup_lam lam P((TM)* > lam)`` against ``C E||M_end||``."""
    if not coeffs.bounded(1.0):
        raise ValueError("transform coefficients must satisfy |a| <= 1")
    if norm_t is None:
        if not (mart.space.is_hilbert and p == 2):
            raise ValueError("the transform norm K is unavailable for this space and p; supply it")
        norm_t = 1.0
    C = transform_constant(norm_t, p) if budget is None else float(budget)
    tm = apply_transform(mart, coeffs)
    star = running_sup(tm.paths, mart.space)[:, -1]
    lhs, lam = weak_l1_exact(star, mart.weights)
    e = float(mart.weights @ mart.space.norm(mart.paths[:, -1]))
    return le_check("weak_l1.transform", lhs, C * e, n=mart.tree.n_atoms, exact=True, constant=C,
                    vacuous=e == 0, lam=lam, ratio=lhs / e if e > 0 else None)


def adversarial_transforms(mart: AdaptedProcess, n_levels: int = 6) -> list[TransformCoeffs]:
    """Hit-and-freeze and sign-flip rules at levels spread over the range of ``M*``."""
    star = running_sup(mart.paths, mart.space)[:, -1]
    hi = float(star.max())
    if hi <= 0:
        return [TransformCoeffs(np.ones(mart.depth + 1))]
    levels = np.unique(np.quantile(star, np.linspace(0.1, 0.9, n_levels)))
    out = []
    for c in levels[levels > 0]:
        out.append(hit_and_freeze(mart.paths, c, mart.space))
        out.append(sign_flip_after(mart.paths, c, mart.space))
    return out


def check_tree_lemmas(mart: AdaptedProcess, coeffs: TransformCoeffs, lam: float | None = None) -> list[CheckResult]:
    """Exact compensator, transform and reconstruction identities on one tree martingale."""
    sp, w, n = mart.space, mart.weights, mart.tree.n_atoms
    out = []
    if lam is None:
        lam = max(float(w @ sp.norm(mart.paths[:, -1])), 1e-300)
    g = gundy(mart, lam)
    a_proc = g.n - g.n.paths[:, :1]
    v = discrete_compensator(a_proc)
    ev = w @ sp.norm(v.paths)
    var_v = w @ variation(v.paths, sp)
    var_a = w @ variation(a_proc.paths, sp)
    i = int(np.argmax(ev - var_v))
    out.append(le_check("lemma.compensator_norm", float(ev[i]), float(var_v[i]), n=n, exact=True, time_index=i))
    i = int(np.argmax(var_v - var_a))
    out.append(le_check("lemma.compensator_variation", float(var_v[i]), float(var_a[i]), n=n, exact=True,
                        time_index=i))

    m = mart - mart.paths[:, :1]
    nt = apply_transform(m, coeffs)
    vn, vm = variation(nt.paths, sp), variation(m.paths, sp)
    e_n, e_m = w @ vn, w @ vm
    i = int(np.argmax(e_n - 2 * e_m))
    out.append(le_check("lemma.transform_variation", float(e_n[i]), 2 * float(e_m[i]), n=n, exact=True,
                        constant=2.0, time_index=i))
    gap = float((vn - vm).max())
    out.append(le_check("lemma.transform_variation_pathwise", gap, 0.0, n=n, exact=True,
                        note="max over atoms and times of Var N - Var M"))

    rec = reconstruct_tree(mart)
    err = float(np.abs(rec.paths - mart.paths).max())
    out.append(le_check("lemma.reconstruction", err, 1e-12 * max(1.0, float(np.abs(mart.paths).max())),
                        n=n, exact=False))

    for label, proc in (("M", m), ("TM", nt)):
        star_zero = running_sup(proc.paths, sp)[:, -1] == 0
        qv_zero = (sp.norm(np.diff(proc.paths, axis=1)) ** 2).sum(axis=1) == 0
        out.append(le_check(f"lemma.null_sets.{label}", float(np.sum(star_zero != qv_zero)), 0.0, n=n,
                            exact=True, note="atoms where {M* = 0} and {[M] = 0} differ"))

    pn = w @ (running_sup(nt.paths, sp) > 0)
    pm = w @ (running_sup(m.paths, sp) > 0)
    i = int(np.argmax(pn - pm))
    out.append(le_check("lemma.transform_support", float(pn[i]), float(pm[i]), n=n, exact=True, time_index=i))
    return out


# -- UMD lower-bound prober ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProbeResult:
    bound: float
    witness: TablePaleyWalsh
    eps: np.ndarray
    evaluations: int
    depth: int
    p: float
    space: NormedSpace

    def coefficients(self) -> np.ndarray:
        """{0,1} transform coefficients ``(1 + eps) / 2``."""
        return (1 + self.eps) // 2

    def to_dict(self) -> dict:
        return {
            "bound": _num(self.bound),
            "eps": [int(e) for e in self.eps],
            "evaluations": int(self.evaluations),
            "depth": int(self.depth),
            "p": _num(self.p),
            "space": self.space.to_dict(),
        }


class _PaleyWalshObjective:
    """``||sum eps_n df_n||_p / ||sum df_n||_p`` on the uniform dyadic tree, updated in place."""

    def __init__(self, depth: int, space: NormedSpace, p: float):
        self.depth, self.space, self.p = depth, space, p
        atoms = np.arange(2**depth)
        self.r = FiltrationTree.rademacher(depth).sign_matrix().astype(float)
        self.width = [2 ** (depth - k + 1) for k in range(1, depth + 1)]
        self.row = [atoms // wd for wd in self.width]

    def lp(self, x: np.ndarray) -> float:
        nx = self.space.norm(x)
        if math.isinf(self.p):
            return float(nx.max())
        return float(np.mean(nx**self.p) ** (1.0 / self.p))

    def ratio(self, F, G) -> float:
        nf = self.lp(F)
        return self.lp(G) / nf if nf > 0 else 0.0

    def build(self, tables, eps):
        F = np.zeros((2**self.depth, self.space.dim))
        G = np.zeros_like(F)
        for k, t in enumerate(tables):
            c = self.r[:, k:k + 1] * t[self.row[k]]
            F += c
            G += eps[k] * c
        return F, G

    def block(self, k: int, row: int) -> slice:
        wd = self.width[k]
        return slice(row * wd, (row + 1) * wd)


def probe_umd_lower_bound(space: NormedSpace, p: float, depth: int, budget: int, seed: int,
                          warm_start: ProbeResult | None = None, ceiling: float | None = None,
                          patience: int = 200) -> ProbeResult:
    """Lower bound on the UMD constant by hill climbing over Paley-Walsh martingales.

    Each evaluation is an exact ratio of ``L^p`` norms over all ``2^depth`` atoms.
    The search is a deterministic function of ``seed``; the best value is
    nondecreasing in ``budget``.  ``warm_start`` (padded with zero coordinates
    if it lives in a smaller space) seeds the search, so probes over nested
    spaces never decrease.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if 2**depth > MAX_ATOMS:
        raise ValueError(f"2^{depth} atoms exceed the tree cap {MAX_ATOMS}")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not p >= 1:
        raise ValueError("p must be >= 1")
    ceiling = 2.0 * depth if ceiling is None else ceiling
    d = space.dim
    obj = _PaleyWalshObjective(depth, space, p)
    rng = np.random.default_rng(seed)

    def fresh():
        tabs = [rng.standard_normal((2 ** (k - 1), d)) for k in range(1, depth + 1)]
        return tabs, rng.choice([-1, 1], size=depth)

    if warm_start is not None:
        wit = warm_start.witness.padded(d) if warm_start.witness.dim < d else warm_start.witness
        if wit.depth != depth or wit.dim != d:
            raise ValueError("warm start must share the depth and not exceed the dimension")
        tabs, eps = [t.copy() for t in wit.tables], np.array(warm_start.eps, dtype=int)
    else:
        tabs, eps = fresh()
    F, G = obj.build(tabs, eps)
    cur = obj.ratio(F, G)
    best = (cur, [t.copy() for t in tabs], eps.copy())
    evals, fails = 1, 0
    while evals < budget:
        if fails >= patience:
            if rng.random() < 0.5:
                tabs, eps = [t.copy() for t in best[1]], best[2].copy()
                k = int(rng.integers(depth))
                tabs[k] = tabs[k] + 0.5 * rng.standard_normal(tabs[k].shape) * (np.abs(tabs[k]).mean() + 1e-12)
            else:
                tabs, eps = fresh()
            F, G = obj.build(tabs, eps)
            cur = obj.ratio(F, G)
            evals += 1
            fails = 0
        else:
            k = int(rng.integers(depth))
            if rng.random() < 0.3:
                G2 = G - 2 * eps[k] * obj.r[:, k:k + 1] * tabs[k][obj.row[k]]
                val = obj.ratio(F, G2)
                evals += 1
                if val > cur:
                    eps[k] = -eps[k]
                    G, cur, fails = G2, val, 0
                else:
                    fails += 1
            else:
                row = int(rng.integers(2**k))
                j = int(rng.integers(d))
                step = float(rng.choice([1.0, 0.3, 0.1])) * (np.abs(tabs[k]).mean() + 1e-12) * rng.standard_normal()
                blk = obj.block(k, row)
                delta = np.zeros(d)
                delta[j] = step
                dF = obj.r[blk, k:k + 1] * delta
                F2, G2 = F.copy(), G.copy()
                F2[blk] += dF
                G2[blk] += eps[k] * dF
                val = obj.ratio(F2, G2)
                evals += 1
                if val > cur:
                    tabs[k][row, j] += step
                    F, G, cur, fails = F2, G2, val, 0
                else:
                    fails += 1
        if cur > best[0]:
            best = (cur, [t.copy() for t in tabs], eps.copy())
    if best[0] > ceiling:
        raise RuntimeError(f"probed bound {best[0]:.6g} exceeds the sanity ceiling {ceiling:.6g}")
    return ProbeResult(best[0], TablePaleyWalsh(best[1]), best[2], evals, depth, p, space)


def probe_nested(q: float, dims, p: float, depth: int, budget: int, seed: int) -> list[ProbeResult]:
    """Probe ``l^q_d`` for increasing ``d``, warm-starting each search from the previous best."""
    out: list[ProbeResult] = []
    for d in sorted(dims):
        prev = out[-1] if out else None
        out.append(probe_umd_lower_bound(NormedSpace(d, q), p, depth, budget, seed, warm_start=prev))
    return out


# -- divergence demo -----------------------------------------------------------------

@dataclass(frozen=True)
class DivergenceRow:
    depth: int
    dim: int
    n_paths: int
    median_sup: float
    p90_sup: float
    mean_end: float
    mean_end_hi: float
    mean_f: float
    grid_steps: int

    def to_dict(self) -> dict:
        return {k: _num(v) if isinstance(v, float) else v for k, v in self.__dict__.items()}


def agreement_witness(depth: int) -> tuple[PaleyWalshSpec, np.ndarray]:
    return AgreementWitness(depth), AgreementWitness.transform_mask(depth)


def divergence_demo(depths, n_paths: int, seed: int, witness: Callable = agreement_witness,
                    end_bound: float = 3.0, leak_fraction: float = 0.5, levels: int = 4):
    """Continuous-part sup of the embedding versus ``E||M_end||`` across depths.

    ``witness(depth)`` returns a Paley-Walsh spec and {0,1} coefficients; the
    space is ``l^inf`` of the witness dimension.  Returns the table rows and the
    checks: the end-norm mean stays below ``end_bound`` at every depth and the
    median sup strictly increases.
    """
    depths = sorted(depths)
    children = np.random.SeedSequence(seed).spawn(len(depths))
    rows, checks = [], []
    for depth, child in zip(depths, children):
        pw, a = witness(depth)
        space = NormedSpace(pw.dim, math.inf)
        emb = BurkholderEmbedding(pw, a, space, depth, leak_fraction, levels)
        s = emb.summary(emb.sample(n_paths, child))
        m, _, hi = mean_ci(s["end_norm"])
        rows.append(DivergenceRow(depth, pw.dim, n_paths, float(np.median(s["cont_sup"])),
                                  float(np.quantile(s["cont_sup"], 0.9)), m, hi, float(s["f_norm"].mean()),
                                  emb.grid.n_steps))
        checks.append(le_check(f"divergence.end_norm.depth{depth}", m, end_bound, n=n_paths, exact=False,
                               upper=hi, constant=end_bound))
    med = [r.median_sup for r in rows]
    gaps = np.diff(med) if len(med) > 1 else np.array([np.inf])
    g = float(gaps.min())
    c = CheckResult("divergence.median_growth", 0.0, g, g, g, g > 0, n_paths, False,
                    note="smallest increase of the median sup across depths", extra={"medians": med}, sense="ge")
    checks.append(c)
    return rows, checks
