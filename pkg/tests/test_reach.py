import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mintime.catalog import closed_form_double_integrator as closed_form
from mintime.pmp import endpoint
from mintime.reach import membership, mintime_bisection, mintime_shooting, normal_cone_at, support

coord = st.floats(-2, 2)


def test_support_examples(di):
    assert math.isclose(support(di, [0, 1], 1.7), 1.7, rel_tol=1e-12)
    assert math.isclose(support(di, [1, 0], 1.7), 1.7**2 / 2, rel_tol=1e-12)
    assert support(di, [0.6, 0.8], 0.0) == 0.0


@given(st.floats(0, 2 * math.pi), st.floats(0.05, 3))
def test_support_quadrature_oracle(di, a, t):
    # sigma_t(zeta) = int_0^t |zeta_2 - zeta_1 s| ds for the double integrator
    z = np.array([math.cos(a), math.sin(a)])
    s = np.linspace(0.0, t, 200001)
    ref = np.trapezoid(np.abs(z[1] - z[0] * s), s)
    assert abs(support(di, z, t) - ref) <= 1e-8 * max(1.0, t)


def test_membership_examples(di):
    assert membership(di, [0, 0], 0.5)[0] == "interior"
    assert membership(di, [-0.5, 1], 1.0)[0] == "boundary"
    assert membership(di, [-0.5, 1], 2.0)[0] == "interior"
    assert membership(di, [-0.5, 1], 0.5)[0] == "outside"


def test_bisection_examples(di):
    assert mintime_bisection(di, [0, 0]).T == 0.0
    assert abs(mintime_bisection(di, [1, 0]).T - 2.0) <= 1e-6
    assert abs(mintime_bisection(di, [-0.5, 1]).T - 1.0) <= 1e-6


@given(coord, coord)
def test_bisection_closed_form(di, a, b):
    x = np.array([a, b])
    assert abs(mintime_bisection(di, x).T - closed_form(x)) <= 1e-6


def test_shooting_examples(di):
    # (1/2, -1) is a corner of R_1: every zeta with zeta_2 <= min(0, zeta_1) has E(1, zeta) = x,
    # and (1, 0) is the edge of that cone where h vanishes
    r = mintime_shooting(di, [0.5, -1])
    assert abs(r.T - 1.0) <= 1e-6
    z = r.zeta_star
    assert z[1] <= 1e-9 and z[1] <= z[0] + 1e-9
    assert np.allclose(endpoint(di, z, r.T), [0.5, -1], atol=1e-8)
    assert mintime_shooting(di, [0, 0]).T == 0.0
    assert abs(mintime_shooting(di, [1, 0]).T - 2.0) <= 1e-6


@given(coord, coord)
def test_shooting_agrees_with_bisection_harmonic(harmonic, a, b):
    x = np.array([a, b])
    if np.linalg.norm(x) < 1e-6:
        return
    T1 = mintime_bisection(harmonic, x).T
    T2 = mintime_shooting(harmonic, x).T
    assert abs(T1 - T2) <= 1e-5 * max(1.0, T1)


def test_normal_cone_at_corner(di):
    # (-1/2, 1) is reached with constant control: a corner of R_1 whose normal cone
    # has the transported costate (1, 1)/sqrt(2) on its edge
    x = np.array([-0.5, 1.0])
    C = normal_cone_at(di, x, 1.0)
    assert len(C) >= 2
    for z in C:
        assert abs(z @ x - support(di, z, 1.0)) <= 1e-8
    e = np.array([1.0, 1.0]) / math.sqrt(2)
    assert abs(e @ x - support(di, e, 1.0)) <= 1e-14
    ang = np.sort(np.arctan2(C[:, 1], C[:, 0]))
    assert ang[0] <= math.pi / 4 + 0.02 and ang[-1] >= math.pi / 4


def test_normal_cone_regular_point_has_negative_h(di):
    from mintime.pmp import hamiltonian

    C = normal_cone_at(di, [1, 0], 2.0)
    assert len(C) == 1
    assert hamiltonian(di, [1, 0], C[0]).value < 0


def test_nonfinite_point_rejected(di):
    with pytest.raises(ValueError):
        mintime_bisection(di, [math.nan, 0])
