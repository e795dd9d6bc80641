import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mintime.expr import ExpressionError, parse

small = st.floats(-1.5, 1.5)

exprs = st.recursive(
    st.sampled_from(["x1", "x2", 0.5, -2.0, 1.0]),
    lambda ch: st.one_of(
        st.tuples(st.sampled_from(["add", "sub", "mul"]), ch, ch).map(list),
        st.tuples(st.sampled_from(["sin", "cos"]), ch).map(list),
        st.tuples(st.just("pow"), ch, st.integers(0, 3)).map(list),
    ),
    max_leaves=8,
)


def test_parse_and_evaluate():
    e = parse(["add", ["mul", 2, "x1"], ["pow", "x2", 3]])
    assert e((1.5, 2.0)) == 11.0
    assert parse(["sub", 0, ["sin", "x1"]])((math.pi / 2, 0)) == -1.0
    assert parse(["var", 2])((3.0, 4.0)) == 4.0
    assert parse(["const", 2.5])((0, 0)) == 2.5


def test_derivatives_exact():
    e = parse(["mul", ["sin", "x1"], ["pow", "x2", 2]])
    x = (0.7, -1.3)
    assert math.isclose(e.diff(0)(x), math.cos(0.7) * 1.69, rel_tol=1e-15)
    assert math.isclose(e.diff(1)(x), math.sin(0.7) * 2 * -1.3, rel_tol=1e-15)
    assert parse(["add", 1, ["pow", "x1", 2]]).diff(0)((0.0, 0.0)) == 0.0


@given(exprs, small, small)
def test_derivative_matches_central_difference(doc, a, b):
    e = parse(doc)
    for i in range(2):
        h = 1e-6
        xp = [a, b]
        xm = [a, b]
        xp[i] += h
        xm[i] -= h
        fd = (e(tuple(xp)) - e(tuple(xm))) / (2 * h)
        d = e.diff(i)((a, b))
        assert abs(d - fd) <= 1e-5 * (1 + abs(d))


@given(exprs, small, small)
def test_json_round_trip(doc, a, b):
    e = parse(doc)
    assert parse(e.to_json())((a, b)) == pytest.approx(e((a, b)), rel=1e-15, abs=1e-15)


def test_vectorized_evaluation():
    e = parse(["add", "x1", ["cos", "x2"]])
    X = (np.array([0.0, 1.0]), np.array([0.0, math.pi]))
    assert np.allclose(e(X), [1.0, 0.0])


@pytest.mark.parametrize(
    "doc",
    ["x3", ["pow", "x1", -1], ["pow", "x1", 1.5], ["exp", "x1"], ["add", "x1"], [], True, float("inf"), ["var", 0]],
)
def test_parse_errors(doc):
    with pytest.raises(ExpressionError):
        parse(doc)
