import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from smdbench.core import (EPS_OPEN, BilevelVector, Bounds, DimensionError, Dims, EvalOutcome,
                           clamp_to_bounds, split, total_violation)

sizes = st.integers(0, 4)


@st.composite
def dims_and_vectors(draw):
    p, q, r, s = draw(sizes), draw(sizes), draw(st.integers(1, 4)), draw(sizes)
    d = Dims(p, q, r, s)
    floats = st.floats(-1e6, 1e6, allow_nan=False)
    up = draw(hnp.arrays(float, d.n_upper, elements=floats))
    lo = draw(hnp.arrays(float, d.n_lower, elements=floats))
    return d, up, lo


def test_dims_rejects_bad_values():
    with pytest.raises(ValueError):
        Dims(-1, 1, 1)
    with pytest.raises(TypeError):
        Dims(1.5, 1, 1)
    with pytest.raises(ValueError):
        Dims(0, 0, 0)
    assert Dims.parse("1,2,1") == Dims(1, 2, 1)
    assert Dims.parse("1,0,1,2").as_tuple() == (1, 0, 1, 2)


def test_split_example():
    v = split([1, 2], [3, 4, 5], Dims(1, 2, 1))
    assert v.xu1.tolist() == [1.0] and v.xu2.tolist() == [2.0]
    assert v.xl1.tolist() == [3.0, 4.0] and v.xl2.tolist() == [5.0]


def test_split_length_errors():
    with pytest.raises(DimensionError):
        split([1, 2, 3], [3, 4, 5], Dims(1, 2, 1))
    with pytest.raises(DimensionError):
        split([1, 2], [3, 4], Dims(1, 2, 1))


@given(dims_and_vectors())
def test_split_round_trip(case):
    d, up, lo = case
    v = split(up, lo, d)
    assert v.matches(d)
    np.testing.assert_array_equal(v.upper, up)
    np.testing.assert_array_equal(v.lower, lo)


def test_bilevel_vector_interaction_lengths_must_agree():
    with pytest.raises(DimensionError):
        BilevelVector([1.0], [1.0, 2.0], [0.0], [0.0])


def test_total_violation_examples():
    assert total_violation([]) == 0.0
    assert total_violation([0.0, 1.0]) == 0.0
    assert total_violation([-0.5, 2.0, -1.0]) == 1.5


@given(hnp.arrays(float, st.integers(1, 8), elements=st.floats(-1e3, 1e3)),
       hnp.arrays(float, 8, elements=st.floats(0, 1e3)))
def test_violation_monotone_under_tightening(c, shift):
    # lowering any constraint value can never reduce the violation
    tighter = c - shift[:c.size]
    assert total_violation(tighter) >= total_violation(c)
    assert (total_violation(c) == 0) == bool(np.all(c >= 0))


def test_bounds_open_endpoints():
    b = Bounds([0.0], [1.0], [True], [False])
    assert b.inner_lower[0] == pytest.approx(EPS_OPEN)
    assert b.inner_upper[0] == 1.0
    assert not b.contains([0.0])[0]
    assert b.contains([1.0])[0]


def test_bounds_validation():
    with pytest.raises(ValueError):
        Bounds([1.0], [0.0])
    with pytest.raises(DimensionError):
        Bounds([0.0, 0.0], [1.0])
    with pytest.raises(ValueError):
        Bounds([0.0], [np.inf])


@given(hnp.arrays(float, 3, elements=st.floats(-1e9, 1e9)))
def test_clamp_idempotent_and_inside(x):
    b = Bounds([-1.0, 0.0, -5.0], [1.0, 2.0, 10.0], [True, False, True], [True, True, False])
    once = clamp_to_bounds(x, b)
    np.testing.assert_array_equal(clamp_to_bounds(once, b), once)
    assert np.all(b.contains(once))


def test_clamp_length_error():
    with pytest.raises(DimensionError):
        clamp_to_bounds([0.0], Bounds.uniform(2, 0, 1))


def test_eval_outcome_tags_and_feasibility():
    out = EvalOutcome(1.0, 2.0, [0.0, 1.0], [-0.1], ("a", "c"), ("b",))
    assert out.upper_violation == 0.0
    assert out.lower_violation == pytest.approx(0.1)
    assert not out.feasible
    with pytest.raises(DimensionError):
        EvalOutcome(0.0, 0.0, [1.0], [], (), ())
    with pytest.raises(ValueError):
        EvalOutcome(0.0, 0.0, [1.0], [], ("z",), ())
