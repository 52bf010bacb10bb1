import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from martlab.process import (
    Channel,
    LabeledPaths,
    TimeGrid,
    hit_time,
    jump_at,
    pre_stop,
    quadratic_variation,
    read_path_csv,
    running_sup,
    single_jump,
    stop,
    time_of,
    value_at,
    variation,
)
from martlab.space import NormedSpace


def test_grid_validation_and_lookup():
    g = TimeGrid.uniform(1.0, 4)
    assert g.n_steps == 4 and g.mesh == 0.25 and g.horizon == 1.0
    assert g.index_of(0.5) == 2
    with pytest.raises(ValueError, match="not on the grid"):
        g.index_of(0.3)
    with pytest.raises(ValueError, match="start at"):
        TimeGrid(np.array([0.1, 0.2]))
    with pytest.raises(ValueError, match="increasing"):
        TimeGrid(np.array([0.0, 0.5, 0.5]))
    assert TimeGrid.uniform(1.0, 4) == g


def _paths():
    g = TimeGrid.uniform(1.0, 4)
    cont = np.array([[[0.1], [-0.1], [0.1], [0.1]]])
    acc = np.array([[[0.0], [1.0], [0.0], [0.0]]])
    return LabeledPaths(g, [0.5], {Channel.CONT: cont, Channel.ACC_JUMP: acc},
                        acc_steps=[False, True, False, False])


def test_values_and_channel_selection():
    p = _paths()
    np.testing.assert_allclose(p.values()[0, :, 0], [0.5, 0.6, 1.5, 1.6, 1.7])
    np.testing.assert_allclose(p.values([Channel.CONT], initial=False)[0, :, 0], [0, 0.1, 0, 0.1, 0.2])
    assert p.channels == (Channel.CONT, Channel.ACC_JUMP)
    assert np.all(p.channel(Channel.QLC_JUMP) == 0)
    assert value_at(p, 2)[0, 0] == pytest.approx(1.5)
    with pytest.raises(IndexError):
        value_at(p, 5)


def test_validate_rejects_misplaced_jumps():
    p = _paths()
    p.validate(mesh_bound=0.2)
    with pytest.raises(ValueError, match="mesh bound"):
        p.validate(mesh_bound=0.05)
    bad = LabeledPaths(p.grid, [0.0], {Channel.ACC_JUMP: p.increments[Channel.ACC_JUMP]})
    with pytest.raises(ValueError, match="outside the declared"):
        bad.validate()
    bad = LabeledPaths(p.grid, [0.0], {Channel.QLC_JUMP: p.increments[Channel.ACC_JUMP]},
                       acc_steps=p.acc_steps)
    with pytest.raises(ValueError, match="predictable time"):
        bad.validate()
    with pytest.raises(ValueError, match="shape"):
        LabeledPaths(p.grid, [0.0], {Channel.CONT: np.zeros((1, 3, 1))})


def test_stopping_on_labeled_paths():
    p = _paths()
    np.testing.assert_allclose(p.stopped(2).values()[0, :, 0], [0.5, 0.6, 1.5, 1.5, 1.5])
    np.testing.assert_allclose(p.pre_stopped(2).values()[0, :, 0], [0.5, 0.6, 0.6, 0.6, 0.6])
    assert np.all(p.pre_stopped(0).values() == 0)


def test_hit_time_ties_and_never():
    sp = NormedSpace(1)
    v = np.array([[[0.0], [1.0], [1.0], [2.0]], [[0.0], [0.2], [0.1], [0.3]]])
    # the level is reached with equality at index 1
    assert hit_time(v, 1.0, sp).tolist() == [1, 4]
    assert time_of(hit_time(v, 1.0, sp), TimeGrid.uniform(1.0, 3)).tolist() == [1 / 3, math.inf]
    with pytest.raises(ValueError):
        hit_time(v, 0.0, sp)


def test_variation_and_quadratic_variation():
    sp = NormedSpace(2, 1)
    v = np.array([[[1.0, 0.0], [2.0, -1.0], [2.0, 1.0]]])
    assert variation(v, sp)[0].tolist() == [1.0, 3.0, 5.0]
    assert running_sup(v, sp)[0].tolist() == [1.0, 3.0, 3.0]
    assert quadratic_variation(v, [1.0, 1.0])[0].tolist() == [0.0, 0.0, 4.0]


def test_csv_round_trip():
    p = _paths()
    buf = io.StringIO()
    p.to_csv(buf)
    back = read_path_csv(io.StringIO(buf.getvalue()), p.grid)
    np.testing.assert_array_equal(back.values(), p.values())
    assert back.channels == p.channels


values_strategy = arrays(float, (3, 6, 2), elements=st.floats(-5, 5, allow_nan=False))


@settings(max_examples=100, deadline=None)
@given(v=values_strategy, tau=arrays(np.int64, 3, elements=st.integers(0, 6)))
def test_stopped_path_splits_into_left_limit_and_jump(v, tau):
    np.testing.assert_allclose(stop(v, tau), pre_stop(v, tau) + single_jump(v, tau), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(v=values_strategy, tau=arrays(np.int64, 3, elements=st.integers(0, 6)))
def test_stopping_freezes_after_tau(v, tau):
    s = stop(v, tau)
    for i, t in enumerate(tau):
        t = min(int(t), 5)
        np.testing.assert_array_equal(s[i, : t + 1], v[i, : t + 1])
        np.testing.assert_array_equal(s[i, t:], np.broadcast_to(v[i, t], s[i, t:].shape))
    assert np.all(jump_at(v, np.full(3, 6)) == 0)
