import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from martlab.space import NormedSpace, separating_set

finite = st.floats(-1e3, 1e3, allow_nan=False)
QS = (1.0, 1.5, 2.0, 3.0, math.inf)


def test_known_norms():
    v = np.array([3.0, -4.0])
    assert NormedSpace(2, 1).norm(v) == 7.0
    assert NormedSpace(2, 2).norm(v) == 5.0
    assert NormedSpace(2, math.inf).norm(v) == 4.0
    assert NormedSpace(2, 3).norm(v) == pytest.approx((27 + 64) ** (1 / 3))


def test_norm_is_taken_along_last_axis():
    x = np.ones((5, 4, 3))
    assert NormedSpace(3).norm(x).shape == (5, 4)
    with pytest.raises(ValueError, match="trailing dimension"):
        NormedSpace(2).norm(x)


@pytest.mark.parametrize("q,expected", [(1, math.inf), (2, 2.0), (4, 4 / 3), (math.inf, 1.0)])
def test_conjugate_exponent(q, expected):
    assert NormedSpace(3, q).conjugate == expected


def test_hilbert_detection():
    assert NormedSpace(4, 2).is_hilbert
    assert NormedSpace(1, math.inf).is_hilbert
    assert not NormedSpace(2, 1).is_hilbert


@pytest.mark.parametrize("dim,q", [(0, 2), (2.5, 2), (2, 0.5), (2, float("nan"))])
def test_invalid_spaces(dim, q):
    with pytest.raises(ValueError):
        NormedSpace(dim, q)


def test_to_dict_spells_infinity():
    assert NormedSpace(3, math.inf).to_dict() == {"dim": 3, "q": "inf"}


def test_separating_set_recovers_linf_and_is_full_rank():
    s = separating_set(NormedSpace(4), extras=3, seed=1)
    assert len(s) == 7 and s.rank == 4
    v = np.array([0.5, -2.0, 1.0, 0.0])
    assert np.abs(s.pair(v)[:4]).max() == NormedSpace(4, math.inf).norm(v)
    with pytest.raises(ValueError):
        separating_set(NormedSpace(2), extras=-1)


def test_dual_norm_is_attained_holder_pairing():
    sp = NormedSpace(3, 3.0)
    x = np.array([1.0, -2.0, 0.5])
    # the maximizer of <x, y> over the unit dual ball is sign(x)|x|^(q-1) / ||x||^(q-1)
    y = np.sign(x) * np.abs(x) ** 2 / sp.norm(x) ** 2
    assert sp.dual_norm(y) == pytest.approx(1.0)
    assert x @ y == pytest.approx(sp.norm(x))


@settings(max_examples=200, deadline=None)
@given(q=st.sampled_from(QS), x=arrays(float, 4, elements=finite), y=arrays(float, 4, elements=finite),
       c=finite)
def test_norm_axioms(q, x, y, c):
    sp = NormedSpace(4, q)
    assert sp.norm(x + y) <= sp.norm(x) + sp.norm(y) + 1e-9 * (1 + sp.norm(x) + sp.norm(y))
    assert sp.norm(c * x) == pytest.approx(abs(c) * sp.norm(x), rel=1e-9, abs=1e-12)
    assert sp.norm(x) >= 0


@settings(max_examples=200, deadline=None)
@given(q=st.sampled_from(QS), x=arrays(float, 3, elements=finite), y=arrays(float, 3, elements=finite))
def test_holder_inequality(q, x, y):
    sp = NormedSpace(3, q)
    assert abs(x @ y) <= sp.norm(x) * sp.dual_norm(y) * (1 + 1e-9) + 1e-9
