import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from martlab.finprob import AdaptedProcess, FiltrationTree, is_martingale
from martlab.generators import (
    AccessibleSeries,
    CompensatedPoisson,
    ContinuousDriver,
    FiniteMarks,
    GridModel,
    gen_random_tree_martingale,
)
from martlab.process import Channel, TimeGrid, hit_time, single_jump
from martlab.space import NormedSpace, separating_set
from martlab.stochcalc import (
    AccessibleCompensator,
    DriftCompensator,
    PoissonCompensator,
    TransformCoeffs,
    alternating,
    apply_transform,
    compensate,
    compensate_tree,
    hit_and_freeze,
    is_differentially_subordinate,
    is_weakly_differentially_subordinate,
    jump_measure,
    random_predictable,
    reconstruct_from_jumps,
    reconstruct_tree,
    sign_flip_after,
)

GRID = TimeGrid.uniform(1.0, 40)
SPACE = NormedSpace(2)
MARKS = FiniteMarks(np.array([[1.0, 0.0], [0.0, -2.0]]), np.array([0.75, 0.25]))


def _jump_model():
    return GridModel(SPACE, GRID, (
        (1.0, CompensatedPoisson(2.0, MARKS)),
        (1.0, AccessibleSeries((0.5,), FiniteMarks.rademacher([0.5, 0.5]))),
    ))


def test_jump_measure_collects_both_jump_channels():
    p = _jump_model().sample(30, 2)
    s = jump_measure(p)
    np.testing.assert_array_equal(s.marks, p.channel(Channel.QLC_JUMP) + p.channel(Channel.ACC_JUMP))
    assert all(s.mask[:, 19])
    k, mark = s.events(0)[0]
    np.testing.assert_array_equal(mark, s.marks[0, k - 1])
    with pytest.raises(ValueError, match="not jump channels"):
        jump_measure(p, [Channel.CONT])


def test_poisson_compensator_drift():
    acc = np.zeros(GRID.n_steps, dtype=bool)
    acc[19] = True
    d = PoissonCompensator(2.0, MARKS.mean, acc).drift(GRID)
    np.testing.assert_allclose(d[0], -2.0 * GRID.dt[0] * MARKS.mean)
    assert np.all(d[19] == 0)
    np.testing.assert_allclose(DriftCompensator.from_model(_jump_model()).drift(GRID), d)
    assert np.all(AccessibleCompensator(2).drift(GRID) == 0)


def test_compensated_stream_is_centred():
    p = _jump_model().sample(20_000, 4)
    m = compensate(jump_measure(p, [Channel.QLC_JUMP]), DriftCompensator.from_model(_jump_model()))
    end = m.values()[:, -1]
    se = end.std(axis=0, ddof=1) / np.sqrt(end.shape[0])
    assert np.all(np.abs(end.mean(axis=0)) < 4 * se)


def test_reconstruction_from_jumps_is_exact():
    model = _jump_model()
    p = model.sample(50, 1)
    back = reconstruct_from_jumps(p, model)
    np.testing.assert_allclose(back.values(), p.values(), atol=1e-13)
    with_cont = GridModel(SPACE, GRID, ((1.0, ContinuousDriver(1.0)),)).sample(2, 0)
    with pytest.raises(ValueError, match="continuous part"):
        reconstruct_from_jumps(with_cont)


def test_tree_compensator_of_a_single_jump():
    # M = 0.4 r1 + 0.8 r2; the jump at the first time |M| >= 1/2 is 0.8 r2 on {r1 = r2}
    tree = FiltrationTree.rademacher(2)
    r = tree.sign_matrix()
    paths = np.zeros((4, 3, 1))
    paths[:, 1, 0] = 0.4 * r[:, 0]
    paths[:, 2, 0] = 0.4 * r[:, 0] + 0.8 * r[:, 1]
    tau = hit_time(paths, 0.5, NormedSpace(1))
    jumps = AdaptedProcess(tree, single_jump(paths, tau))
    comp = jumps - compensate_tree(jumps)
    np.testing.assert_allclose(comp.paths[:, 2, 0], 0.4 * r[:, 0])
    assert is_martingale(compensate_tree(jumps))[0]


def test_tree_reconstruction():
    m = gen_random_tree_martingale(3, 4, 2, NormedSpace(3, 1))
    np.testing.assert_allclose(reconstruct_tree(m).paths, m.paths, atol=1e-13)


def test_transform_rules():
    assert alternating(4).a.tolist() == [0, 1, 0, 1, 0]
    assert alternating(4, start=0).a.tolist() == [0, 0, 1, 0, 1]
    v = np.array([[[0.0], [0.5], [1.0], [0.2]]])
    assert hit_and_freeze(v, 1.0, NormedSpace(1)).a.tolist() == [[1, 1, 1, 0]]
    assert sign_flip_after(v, 0.5, NormedSpace(1)).a.tolist() == [[1, 1, -1, -1]]
    assert TransformCoeffs(np.array([0.0, 1.0])).is_binary()
    assert not TransformCoeffs(np.array([0.0, -2.0])).bounded()


def test_identity_and_zero_transforms():
    m = gen_random_tree_martingale(5, 3, 2, SPACE)
    np.testing.assert_allclose(apply_transform(m, np.ones(4)).paths, m.paths, atol=1e-14)
    assert np.all(apply_transform(m, np.zeros(4)).paths == 0)
    p = _jump_model().sample(3, 0)
    np.testing.assert_allclose(apply_transform(p, np.ones(GRID.n_steps + 1)).values(), p.values())
    with pytest.raises(ValueError, match="coefficients"):
        apply_transform(m.paths, np.ones(3))


def test_transform_rejects_anticipating_coefficients():
    m = gen_random_tree_martingale(5, 2, 2, SPACE)
    peek = np.ones((4, 3))
    peek[:, 1] = np.sign(m.paths[:, 1, 0])
    with pytest.raises(ValueError, match="not predictable"):
        apply_transform(m, peek)


def test_differential_subordination():
    m = gen_random_tree_martingale(8, 4, 2, SPACE).paths
    x = np.array([1.0, -1.0])
    assert is_differentially_subordinate(m, m, x).all()
    assert not is_differentially_subordinate(2 * m, m, x).any()
    extra = m.copy()
    extra[:, -1, 0] += 1.0
    assert not is_differentially_subordinate(extra, m, x).all()
    assert is_weakly_differentially_subordinate(-m, m, separating_set(SPACE, extras=4)).all()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), depth=st.integers(1, 5))
def test_predictable_transform_properties(seed, depth):
    m = gen_random_tree_martingale(seed, depth, 2, SPACE)
    rng = np.random.default_rng(seed)
    a, b = random_predictable(m.tree, rng), random_predictable(m.tree, rng)
    ta, tb = apply_transform(m, a), apply_transform(m, b)
    tab = apply_transform(m, TransformCoeffs(a.a + 2 * b.a))
    np.testing.assert_allclose(tab.paths, ta.paths + 2 * tb.paths, atol=1e-10)
    assert is_martingale(ta)[0]
    assert is_weakly_differentially_subordinate(ta.paths, m.paths, separating_set(SPACE, 3)).all()
