import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from martlab.finprob import AdaptedProcess, FiltrationTree
from martlab.generators import (
    AccessibleSeries,
    AgreementWitness,
    FiniteMarks,
    GridModel,
    gen_random_tree_martingale,
)
from martlab.process import TimeGrid, running_sup
from martlab.space import NormedSpace
from martlab.stochcalc import TransformCoeffs, random_predictable
from martlab.verify import (
    Z95,
    CanonicalSummary,
    Ensemble,
    canonical_summary,
    check_gundy_bounds,
    check_lp_bound,
    check_tree_lemmas,
    check_weak_l1_transform,
    divergence_demo,
    estimate_tail,
    lambda_grid,
    le_check,
    martingale_ztest,
    probe_nested,
    probe_umd_lower_bound,
    transform_constant,
    weak_l1_exact,
    wilson,
)


def _walk_model(steps=8):
    grid = TimeGrid.uniform(1.0, steps)
    times = tuple(grid.times[1:])
    return GridModel(NormedSpace(1), grid, ((1.0, AccessibleSeries(times, FiniteMarks.rademacher([1.0]))),))


def test_constants():
    assert transform_constant(1.0, 2.0) == 80.0
    g = lambda_grid(1.0, 40, 4)
    assert g.size == 40 and g[0] == pytest.approx(1e-2) and g[-1] == pytest.approx(1e2)


def test_wilson_with_no_hits():
    lo, hi = wilson(0, 100)
    assert lo == 0.0
    assert hi <= 3.7 / 100
    for n in (10, 1000, 10**5):
        assert wilson(0, n)[1] <= Z95**2 / n


def test_exact_tail_on_a_tree():
    tree = FiltrationTree.branching(1, 2, probs=[0.2, 0.8])
    m = AdaptedProcess(tree, np.array([[0.0, 4.0], [0.0, -1.0]]))
    t = estimate_tail(m, lambda p: np.abs(p.paths[:, -1, 0]), [0.5, 2.0, 5.0])
    assert t.exact and t.p.tolist() == [1.0, 0.2, 0.0]


def test_monte_carlo_tail_matches_enumeration():
    # P(max_k |S_k| > 2) for an 8-step walk, by enumerating all 256 sign paths
    hits = 0
    for signs in itertools.product((1, -1), repeat=8):
        hits += np.abs(np.cumsum(signs)).max() > 2
    exact = hits / 256
    ens = Ensemble(_walk_model(), 40_000, seed=1, chunk=7_000)
    t = estimate_tail(ens, lambda c: running_sup(c.values(), c.space)[:, -1], 2.0)
    se = math.sqrt(exact * (1 - exact) / ens.n)
    assert abs(float(t.p) - exact) < 4 * se
    assert t.lo <= t.p <= t.hi


def test_ensemble_is_reproducible_and_chunked():
    a = Ensemble(_walk_model(), 25, seed=3, chunk=10)
    assert a.sizes == [10, 10, 5]
    x = a.collect(lambda c: c.values()[:, -1, 0])
    y = Ensemble(_walk_model(), 25, seed=3, chunk=10).collect(lambda c: c.values()[:, -1, 0])
    assert np.array_equal(x, y)
    with pytest.raises(ValueError):
        Ensemble(_walk_model(), 0, seed=0)


@settings(max_examples=100, deadline=None)
@given(x=st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=12),
       w=st.lists(st.floats(0.01, 1.0), min_size=12, max_size=12))
def test_exact_weak_l1_matches_brute_force(x, w):
    x = np.array(x)
    w = np.array(w[: x.size])
    w = w / w.sum()
    val, _ = weak_l1_exact(x, w)
    # the supremum over lam of lam P(X > lam) is attained in the limit lam -> x_i from below
    brute = max(float(xi * w[x >= xi].sum()) for xi in x)
    assert val == pytest.approx(brute, rel=1e-12, abs=1e-300)


def test_le_check_rounding_and_sense():
    assert le_check("a", 1.0 + 1e-13, 1.0, n=1, exact=True).passed
    assert not le_check("a", 1.0 + 1e-9, 1.0, n=1, exact=True).passed
    c = le_check("b", 0.5, 1.0, n=10, exact=False, upper=0.9)
    assert c.slack == pytest.approx(0.1)
    assert c.to_dict()["ci"] == [0.5, 0.9]


def test_zero_martingale_is_vacuous():
    tree = FiltrationTree.rademacher(2)
    zero = AdaptedProcess(tree, np.zeros((4, 3, 1)))
    rep = check_gundy_bounds(zero, [1.0])
    # only the sup bound 2 lam has a positive right-hand side
    assert rep.passed and [c.name for c in rep.checks if not c.vacuous] == ["gundy.additivity", "gundy.m1_sup"]
    c = check_weak_l1_transform(zero, TransformCoeffs(np.ones(3)))
    assert c.vacuous and c.passed


def test_gundy_failure_path_with_tiny_constant():
    m = gen_random_tree_martingale(0, 4, 2, NormedSpace(2))
    assert check_gundy_bounds(m).passed
    rep = check_gundy_bounds(m, constants={"m3_variation": 0.01})
    assert [c.name for c in rep.failures()] == ["gundy.m3_variation"]


def test_gundy_on_an_ensemble():
    ens = Ensemble(_walk_model(), 2_000, seed=2)
    rep = check_gundy_bounds(None, [0.5, 2.0, 8.0], ens=ens)
    assert rep.passed
    assert rep.checks[0].estimate <= 1e-12


def test_transform_needs_a_norm_outside_hilbert_p2():
    m = gen_random_tree_martingale(0, 3, 2, NormedSpace(2, math.inf))
    with pytest.raises(ValueError, match="supply"):
        check_weak_l1_transform(m, TransformCoeffs(np.ones(4)))
    with pytest.raises(ValueError, match=r"\|a\| <= 1"):
        check_weak_l1_transform(m, TransformCoeffs(np.full(4, 2.0)), norm_t=1.0)


def test_tree_lemma_checks_pass():
    m = gen_random_tree_martingale(3, 5, 2, NormedSpace(3, 1.0), "rademacher")
    rng = np.random.default_rng(0)
    checks = check_tree_lemmas(m, random_predictable(m.tree, rng))
    assert all(c.passed for c in checks), [c.name for c in checks if not c.passed]
    assert {c.name for c in checks} >= {"lemma.reconstruction", "lemma.transform_support"}


def test_ztest_flags_a_drift():
    rng = np.random.default_rng(0)
    assert martingale_ztest(rng.standard_normal((5000, 3)), "z").passed
    assert not martingale_ztest(rng.standard_normal((5000, 3)) + 0.2, "z").passed


def test_canonical_summary_and_pythagoras():
    ens = Ensemble(_walk_model(), 5_000, seed=4)
    s = canonical_summary(ens)
    assert isinstance(s, CanonicalSummary) and s.n == 5_000
    assert s.channels == {"c": [], "q": [], "a": ["ACC_JUMP"]}
    assert check_lp_bound(s).passed
    with pytest.raises(ValueError, match="beta"):
        check_lp_bound(s, p=3.0)


def test_probe_hilbert_and_scalar_cases_give_one():
    for sp in (NormedSpace(4, 2.0), NormedSpace(1, math.inf)):
        r = probe_umd_lower_bound(sp, 2.0, 4, 500, seed=1)
        assert abs(r.bound - 1.0) <= 1e-12


def test_probe_is_monotone_in_budget_and_dimension():
    sp = NormedSpace(3, math.inf)
    b = [probe_umd_lower_bound(sp, 2.0, 4, budget, seed=5).bound for budget in (10, 200, 2000)]
    assert b[0] <= b[1] <= b[2]
    nested = probe_nested(math.inf, [2, 4], 2.0, 4, 1000, seed=5)
    assert nested[0].bound <= nested[1].bound
    assert set(nested[1].coefficients().tolist()) <= {0, 1}
    with pytest.raises(ValueError):
        probe_umd_lower_bound(sp, 2.0, 0, 10, seed=0)


def test_divergence_demo_small():
    rows, checks = divergence_demo([1, 2, 4], 2_000, seed=3)
    assert [r.depth for r in rows] == [1, 2, 4]
    assert rows[0].median_sup == 0.5
    assert all(c.passed for c in checks if c.name.startswith("divergence.end_norm"))
    growth = checks[-1]
    assert growth.sense == "ge" and growth.extra["medians"] == [r.median_sup for r in rows]


def test_divergence_without_transform_has_no_continuous_part():
    def no_bridges(depth):
        return AgreementWitness(depth), np.zeros(depth)

    rows, checks = divergence_demo([2, 3], 500, seed=0, witness=no_bridges)
    assert all(r.median_sup == 0 for r in rows)
    assert not checks[-1].passed
