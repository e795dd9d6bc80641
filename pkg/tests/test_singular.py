import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mintime.catalog import catalog
from mintime.singular import (
    InvarianceFailure,
    SingularSetEmpty,
    SmallTimeViolation,
    box_dimension,
    extend_by_invariance,
    rank_check,
    sample_singular,
    sample_Z,
    singular_point,
    stratify_slice,
    verify_singular,
)
from mintime.system import make_system


def test_sample_Z(di, ti):
    Z = sample_Z(di, 4)
    assert {tuple(np.round(z, 12)) for z in Z} == {(1.0, 0.0), (-1.0, 0.0)}
    Z = sample_Z(ti, 50)
    assert np.allclose(Z[:, 2], 0) and np.allclose(np.linalg.norm(Z, axis=1), 1)


def test_sample_Z_empty():
    with pytest.raises(SingularSetEmpty):
        sample_Z(make_system([[0, 1], [0, 0]], [[0, 1], [1, 0]]), 3)


def test_singular_point_double_integrator(di):
    p = singular_point(di, [1, 0], 1.0)
    assert np.allclose(p.x, [-0.5, 1.0], atol=1e-14)
    assert p.j[0] == 1


@given(st.floats(0.01, 2))
def test_singular_point_triple_integrator(ti, r):
    p = singular_point(ti, [0, 1, 0], r)
    assert np.allclose(p.x, [r**3 / 6, -(r**2) / 2, r], atol=1e-13)


def test_singular_point_small_r(ti):
    assert np.linalg.norm(singular_point(ti, [0.6, 0.8, 0], 1e-6).x) < 1e-5


def test_verify_example(di):
    rep = verify_singular(di, singular_point(di, [1, 0], 1.0))
    assert rep.worst() < 1e-14


@given(st.integers(0, 50), st.floats(0.05, 1.5))
def test_verify_property(linear_systems, seed, r):
    for name in ("triple-integrator", "harmonic"):
        s = linear_systems[name]
        for z in sample_Z(s, 3, seed=seed):
            assert verify_singular(s, singular_point(s, z, r)).ok(1e-7)


def test_strata_double_integrator(di):
    # tau = 0.5 is the small-time limit for the double integrator
    S = stratify_slice(di, 0.5, 20)
    assert [s.j for s in S] == [0]
    reps = sorted(tuple(np.round(x, 12)) for x in S[0].distinct())
    assert reps == [(-0.125, 0.5), (0.125, -0.5)]


def test_strata_triple_integrator(ti):
    S = stratify_slice(ti, 0.5, 400)
    s0, s1 = S[0], S[1]
    assert len(s0.distinct()) == 2
    assert len(s1.families) == 2
    assert all(rk == 1 for rk in s1.rank_report)
    # the interior switch of S_1 sits at the root -2 zeta_2 / zeta_1 of the forward g
    for p in s1.points:
        t = -2 * p.zeta[1] / p.zeta[0]
        assert 0 < t < 0.5 and abs((p.r - p.switch_times[0]) - t) < 1e-9


def test_strata_empty_and_limit(ti):
    assert all(not s.points for s in stratify_slice(ti, 0.5, 0))
    with pytest.raises(SmallTimeViolation):
        stratify_slice(ti, 50.0, 10)


def test_rank_check(ti):
    assert rank_check(ti, [0.1, 0.3]) == 2
    assert rank_check(ti, [0.2]) == 1
    assert rank_check(ti, [0.2, 0.2]) == 1


def test_extend_by_invariance(di, ti):
    p = singular_point(di, [1, 0], 1.0)
    pts = extend_by_invariance(di, p, 2.0, n=11)
    for q in pts:
        assert np.allclose(q.x, [-(q.r**2) / 2, q.r], atol=1e-13)
    assert len(extend_by_invariance(di, p, 1.0)) == 1
    q = singular_point(ti, [0, 1, 0], 0.3)
    for s in extend_by_invariance(ti, q, 1.0, n=8):
        assert np.allclose(s.x, [s.r**3 / 6, -(s.r**2) / 2, s.r], atol=1e-13)
    assert issubclass(InvarianceFailure, RuntimeError)


def test_box_dimension_curve_and_point():
    s = np.linspace(-1.5, 1.5, 10000)
    C = np.stack([-s * np.abs(s) / 2, s], 1)
    assert abs(box_dimension(C).dimension - 1.0) <= 0.1
    assert box_dimension(np.ones((10, 2))).dimension == 0.0


def test_box_dimension_flat_disk():
    rng = np.random.default_rng(0)
    a = rng.uniform(0, 2 * np.pi, 100000)
    r = np.sqrt(rng.uniform(0, 1, 100000))
    D = np.stack([r * np.cos(a), r * np.sin(a), 0.3 * r * np.cos(a)], 1)
    fit = box_dimension(D, center=np.zeros(3), radius=1 / 1.45)
    assert abs(fit.dimension - 2.0) <= 0.1


def test_sample_singular_product(ti):
    pts = sample_singular(ti, 5, 0.1, 1.0, 3)
    assert len(pts) == 15 and {round(p.r, 12) for p in pts} == {0.1, round(math.sqrt(0.1), 12), 1.0}
