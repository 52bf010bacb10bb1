"""Execute a :class:`Scenario`: build the backend, run every analysis, assemble the report.

Analyses run as independent jobs (optionally in a process pool); results are
assembled in scenario order so the report does not depend on scheduling.
Runtimes are kept out of ``report.json`` and written to ``timings.json``.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import martlab
from martlab.generators import gen_random_tree_martingale
from martlab.scenario import Scenario, config_hash
from martlab.stochcalc import (
    TransformCoeffs,
    alternating,
    hit_and_freeze,
    random_predictable,
    sign_flip_after,
)
from martlab.verify import (
    GUNDY_CONSTANTS,
    CheckResult,
    Ensemble,
    VerificationReport,
    adversarial_transforms,
    canonical_summary,
    check_canonical_structure,
    check_gundy_bounds,
    check_lp_bound,
    check_martingale_parts,
    check_tree_lemmas,
    check_weak_l1_canonical,
    check_weak_l1_transform,
    divergence_demo,
    lambda_grid,
    le_check,
    mean_ci,
    probe_nested,
    weak_l1_curve,
)

SCHEMA_VERSION = 1
CANONICAL_FAMILY = ("canonical", "weak_l1", "lp")
OVERRIDABLE = tuple(f"gundy.{k}" for k in GUNDY_CONSTANTS) + (
    "weak_l1", "transform", "martingale.z", "divergence.end_norm",
)


def parse_overrides(items) -> dict:
    """``["NAME=VALUE", ...]`` into a dict, rejecting unknown names."""
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} must look like NAME=VALUE")
        if name not in OVERRIDABLE:
            raise ValueError(f"unknown bound {name!r}; choose from {', '.join(OVERRIDABLE)}")
        out[name] = float(value)
    return out


def derived_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def merge_reports(name: str, reports: list[VerificationReport]) -> VerificationReport:
    """Keep the smallest-slack instance of every check across repeated runs."""
    by_name: dict[str, CheckResult] = {}
    counts: dict[str, int] = {}
    all_ok: dict[str, bool] = {}
    for rep in reports:
        for c in rep.checks:
            counts[c.name] = counts.get(c.name, 0) + 1
            all_ok[c.name] = all_ok.get(c.name, True) and c.passed
            cur = by_name.get(c.name)
            if cur is None or (not c.vacuous and (cur.vacuous or c.slack < cur.slack)):
                by_name[c.name] = c
    checks = []
    for key, c in by_name.items():
        c.passed = all_ok[key]
        c.extra = dict(c.extra, instances=counts[key])
        checks.append(c)
    return VerificationReport(name, checks, {"instances": len(reports)})


# -- analyses --------------------------------------------------------------------

def _trees(s: Scenario, seed: int):
    t = s.tree
    for i in range(t.trees):
        yield i, gen_random_tree_martingale(derived_seed(seed, i), t.depth, t.branching, s.build_space(),
                                            t.leaves, t.random_probs)


def _levels(spec, center: float) -> np.ndarray:
    if spec.values is not None:
        return np.array(spec.values, dtype=float)
    return lambda_grid(center, spec.points, spec.decades)


def _gundy(s: Scenario, a, seed: int, overrides: dict) -> tuple[list, dict]:
    consts = {k.split(".", 1)[1]: v for k, v in overrides.items() if k.startswith("gundy.")}
    if s.backend == "tree":
        reps = []
        for _, m in _trees(s, seed):
            e = float(m.weights @ m.space.norm(m.paths[:, -1]))
            reps.append(check_gundy_bounds(m, _levels(a.lambdas, e), constants=consts))
        return [merge_reports("gundy", reps)], {}
    model = s.build_model()
    ens = Ensemble(model, a.n or s.ensemble.n, seed, s.ensemble.chunk)
    first = model.sample(min(ens.n, 2000), np.random.SeedSequence([seed, 1]))
    e = float(first.space.norm(first.values()[:, -1]).mean())
    return [check_gundy_bounds(None, _levels(a.lambdas, e), ens=ens, constants=consts)], {}


def _canonical_family(s: Scenario, items, seed: int, overrides: dict) -> dict:
    ens = Ensemble(s.build_model(), s.ensemble.n, seed, s.ensemble.chunk, provenance=s.name)
    summary = canonical_summary(ens)
    e, _, _ = mean_ci(summary.space.norm(summary.ends["M"]))
    out = {}
    for index, a in items:
        tables = {}
        if a.kind == "canonical":
            z = overrides.get("martingale.z", a.z_threshold)
            checks = check_canonical_structure(summary) + check_martingale_parts(summary, z)
        elif a.kind == "weak_l1":
            lams = _levels(a.lambdas, e)
            checks = check_weak_l1_canonical(summary, a.parts, lams, overrides.get("weak_l1", a.budget))
            for part in a.parts:
                tables[f"weak_l1_{part}"] = weak_l1_curve(summary, part, lams)
        else:
            checks = [check_lp_bound(summary, a.p, a.part, a.beta)]
        out[index] = ([VerificationReport(a.kind, checks, {"n": summary.n, "mean_norm": e})], tables)
    return out


def _coefficients(a, m) -> list[TransformCoeffs]:
    if a.rule == "alternating":
        return [alternating(m.depth)]
    if a.rule == "hit_and_freeze":
        return [hit_and_freeze(m.paths, a.level, m.space)]
    if a.rule == "sign_flip":
        return [sign_flip_after(m.paths, a.level, m.space)]
    if a.rule == "coefficients":
        return [TransformCoeffs(np.array(a.coefficients, dtype=float))]
    return adversarial_transforms(m)


def _transform(s: Scenario, a, seed: int, overrides: dict) -> tuple[list, dict]:
    reps = []
    for _, m in _trees(s, seed):
        checks = [check_weak_l1_transform(m, c, a.p, a.norm_t, overrides.get("transform"))
                  for c in _coefficients(a, m)]
        reps.append(VerificationReport("transform", checks))
    return [merge_reports("transform", reps)], {}


def _lemmas(s: Scenario, a, seed: int, overrides: dict) -> tuple[list, dict]:
    reps = []
    for i, m in _trees(s, seed):
        rng = np.random.default_rng(derived_seed(seed, 10_000 + i))
        reps.append(VerificationReport("lemmas", check_tree_lemmas(m, random_predictable(m.tree, rng))))
    return [merge_reports("lemmas", reps)], {}


def _probe(s: Scenario, a, seed: int, overrides: dict) -> tuple[list, dict]:
    res = probe_nested(a.q, a.dims, a.p, a.depth, a.budget, seed)
    bounds = [r.bound for r in res]
    checks = [le_check(f"probe.ceiling.d{r.space.dim}", r.bound, 2.0 * a.depth, n=r.evaluations, exact=True,
                       note="probed bound against the sanity ceiling 2 * depth") for r in res]
    gaps = np.diff(bounds) if len(bounds) > 1 else np.array([0.0])
    g = float(gaps.min())
    checks.append(CheckResult("probe.nested_monotone", 0.0, g, g, g, g >= 0, len(res), True,
                              note="smallest change of the probed bound across nested dimensions",
                              extra={"bounds": bounds}, sense="ge"))
    if a.q == 2 and a.p == 2:
        dev = max(abs(b - 1.0) for b in bounds)
        checks.append(le_check("probe.hilbert_unit", dev, 1e-12, n=len(res), exact=False,
                               note="|bound - 1| in the Hilbert case"))
    table = {"dim": [r.space.dim for r in res], "bound": bounds,
             "eps": [" ".join(str(int(e)) for e in r.eps) for r in res]}
    params = {"q": a.q, "p": a.p, "depth": a.depth, "budget": a.budget}
    return [VerificationReport("probe", checks, params)], {"probe": table}


def _divergence(s: Scenario, a, seed: int, overrides: dict) -> tuple[list, dict]:
    rows, checks = divergence_demo(a.depths, a.n_paths, seed, end_bound=overrides.get("divergence.end_norm",
                                                                                      a.end_bound))
    table = {k: [getattr(r, k) for r in rows] for k in rows[0].__dict__}
    return [VerificationReport("divergence", checks, {"n_paths": a.n_paths})], {"divergence": table}


HANDLERS = {"gundy": _gundy, "transform": _transform, "lemmas": _lemmas, "probe": _probe, "divergence": _divergence}


def _run_task(task) -> tuple[dict, float]:
    s, kind, items, seed, overrides = task
    t0 = time.perf_counter()
    try:
        if kind == "family":
            out = _canonical_family(s, items, seed, overrides)
        else:
            (index, a), = items
            out = {index: HANDLERS[a.kind](s, a, derived_seed(seed, index), overrides)}
    except (ValueError, RuntimeError) as exc:
        err = le_check("error", 1.0, 0.0, n=0, exact=True, note=f"{type(exc).__name__}: {exc}")
        out = {index: ([VerificationReport(a.kind, [err])], {}) for index, a in items}
    return out, time.perf_counter() - t0


# -- assembly ----------------------------------------------------------------------

@dataclass
class RunResult:
    report: dict
    timings: dict
    tables: dict

    @property
    def passed(self) -> bool:
        return self.report["passed"]

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1


def _tasks(s: Scenario, seed: int, overrides: dict) -> list:
    family = [(i, a) for i, a in enumerate(s.analyses) if a.kind in CANONICAL_FAMILY]
    tasks = [(s, "family", family, seed, overrides)] if family else []
    tasks += [(s, "single", [(i, a)], seed, overrides) for i, a in enumerate(s.analyses)
              if a.kind not in CANONICAL_FAMILY]
    return tasks


def run_scenario(s: Scenario, seed: int | None = None, jobs: int = 1, overrides: dict | None = None) -> RunResult:
    """Run all analyses; the pass verdict ignores vacuous checks."""
    seed = s.seed if seed is None else seed
    overrides = dict(overrides or {})
    tasks = _tasks(s, seed, overrides)
    t0 = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_run_task, tasks))
    else:
        outputs = [_run_task(t) for t in tasks]
    results, seconds = {}, {}
    for task, (out, dt) in zip(tasks, outputs):
        results.update(out)
        for index, _ in task[2]:
            seconds[index] = dt
    analyses, tables = [], {}
    for index, a in enumerate(s.analyses):
        reports, tabs = results[index]
        ok = all(c.passed for r in reports for c in r.checks if not c.vacuous)
        analyses.append({"index": index, "kind": a.kind, "passed": ok,
                         "reports": [r.to_dict() for r in reports]})
        for key, tab in tabs.items():
            tables[f"{index:02d}_{key}"] = tab
    report = {
        "schema_version": SCHEMA_VERSION,
        "scenario": s.name,
        "reproducibility": {
            "config_sha256": config_hash(s),
            "seed": seed,
            "version": martlab.__version__,
            "numpy": np.__version__,
        },
        "unsafe_overrides": overrides,
        "passed": all(x["passed"] for x in analyses),
        "analyses": analyses,
    }
    timings = {
        "total_seconds": time.perf_counter() - t0,
        "analyses": [{"index": i, "kind": a.kind, "seconds": seconds[i]} for i, a in enumerate(s.analyses)],
    }
    return RunResult(report, timings, tables)


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def write_report(result: RunResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report_json(result.report), encoding="utf-8")
    (out / "timings.json").write_text(json.dumps(result.timings, indent=2) + "\n", encoding="utf-8")
    return out


def write_tables(tables: dict, out_dir) -> list[Path]:
    out = Path(out_dir)
    written = []
    for key, tab in tables.items():
        path = out / f"{key}.csv"
        cols = list(tab)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in zip(*(np.asarray(tab[c]).tolist() for c in cols)):
                w.writerow([repr(x) if isinstance(x, float) and math.isfinite(x) else x for x in row])
        written.append(path)
    return written


def write_paths(s: Scenario, out_dir, count: int, seed: int | None = None) -> list[Path]:
    """Per-path CSVs: grid paths in channel form, or the atom paths of the first tree."""
    seed = s.seed if seed is None else seed
    out = Path(out_dir) / "paths"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if count <= 0:
        return written
    if s.backend == "grid":
        paths = s.build_model().sample(count, seed)
        for i in range(count):
            p = out / f"path_{i:04d}.csv"
            with open(p, "w", newline="", encoding="utf-8") as fh:
                paths.to_csv(fh, i)
            written.append(p)
        return written
    _, m = next(_trees(s, seed))
    p = out / "tree_0000.csv"
    with open(p, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["atom", "prob", "level"] + [f"x{j + 1}" for j in range(m.dim)])
        for atom in range(min(count, m.tree.n_atoms)):
            for level in range(m.depth + 1):
                w.writerow([atom, repr(float(m.weights[atom])), level] + [repr(float(x)) for x in m.paths[atom, level]])
    written.append(p)
    return written
