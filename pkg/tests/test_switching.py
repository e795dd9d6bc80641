import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from mintime.switching import find_zeros, sign_pattern, switching_eval, zero_window_bound

angles = st.floats(0, 2 * math.pi)


@given(st.floats(0, 5))
def test_eval_double_integrator(di, t):
    assert math.isclose(switching_eval(di, [1, 0], 0, t), -t, abs_tol=1e-14)
    assert math.isclose(switching_eval(di, [0, 1], 0, t), 1.0, abs_tol=1e-14)


@given(st.floats(0, 6))
def test_eval_harmonic(harmonic, t):
    assert math.isclose(switching_eval(harmonic, [1, 0], 0, t), -math.sin(t), abs_tol=1e-14)


def test_zeros_harmonic(harmonic):
    p = find_zeros(harmonic, [1, 0], 0, 10.0)
    assert np.allclose(p.times, [0, math.pi, 2 * math.pi, 3 * math.pi], atol=1e-10)
    assert p.multiplicities == [1, 1, 1, 1]


def test_zeros_double_integrator_forward(di):
    p = find_zeros(di, [1, 0], 0, 1.0, "forward")
    assert np.allclose(p.times, [0.0]) and p.multiplicities == [1]


def test_zeros_triple_integrator_forward(ti):
    z = np.array([1, -1, 0]) / math.sqrt(2)
    p = find_zeros(ti, z, 0, 3.0, "forward")
    assert np.allclose(p.times, [0.0, 2.0], atol=1e-10)
    assert p.multiplicities == [1, 1]
    assert p.initial_sign == -1
    assert np.allclose([(a, b, s) for a, b, s in p.pattern], [(0, 2, -1), (2, 3, 1)], atol=1e-10)


def test_double_zero_multiplicity(ti):
    # forward g = z1 t^2/2 + z2 t + z3 has a double zero at t = 1 for z = (1, -1, 1/2)
    z = np.array([1.0, -1.0, 0.5])
    p = find_zeros(ti, z / np.linalg.norm(z), 0, 2.0, "forward")
    assert len(p.zeros) == 1 and abs(p.zeros[0][0] - 1.0) < 1e-6 and p.zeros[0][1] == 2
    assert p.switch_times() == []


def test_sign_patterns(di):
    (p,) = sign_pattern(di, [-1, 0], 1.0, "forward")
    assert p.initial_sign == -1 and p.switch_times() == []
    (q,) = sign_pattern(di, [0, 1], 1.0, "forward")
    assert q.pattern == ((0.0, 1.0, 1),)


@given(angles, st.floats(0.1, 4))
def test_zeros_are_zeros_and_signs_alternate(ti, a, tau):
    z = np.array([math.cos(a), math.sin(a), 0.3])
    z /= np.linalg.norm(z)
    p = find_zeros(ti, z, 0, tau)
    for t, _ in p.zeros:
        assert abs(switching_eval(ti, z, 0, t)) < 1e-9
    signs = [s for _, _, s in p.pattern]
    assert all(s0 == -s1 for s0, s1 in zip(signs, signs[1:]))
    # signs agree with direct evaluation at the piece midpoints
    for lo, hi, s in p.pattern:
        assert np.sign(switching_eval(ti, z, 0, 0.5 * (lo + hi))) == s


def test_zero_window_bounds(di, harmonic, ti):
    assert zero_window_bound(di) == 1.0
    assert zero_window_bound(harmonic) <= math.pi
    tau = zero_window_bound(ti)
    rng = np.random.default_rng(7)
    Z = rng.standard_normal((10000, 3))
    for z in Z[:2000]:
        p = find_zeros(ti, z, 0, tau)
        assert sum(m for _, m in p.zeros) <= 2
