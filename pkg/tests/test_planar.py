import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from mintime import planar as P
from mintime.catalog import closed_form_double_integrator as closed_form
from mintime.reach import mintime_bisection
from mintime.system import make_system

R_MAX = 0.5


def rev_field(sigma):
    # reversed dynamics of the pendulum-like example under the constant control sigma
    return lambda t, x: [-x[1], math.sin(x[0]) - sigma * (1 + x[0] ** 2)]


def two_piece_point(sigma, T, ts):
    """Reversed trajectory: control sigma on [0, ts], -sigma on [ts, T] (scipy oracle)."""
    x = np.zeros(2)
    if ts > 0:
        x = solve_ivp(rev_field(sigma), (0, ts), x, rtol=1e-12, atol=1e-14).y[:, -1]
    if T > ts:
        x = solve_ivp(rev_field(-sigma), (0, T - ts), x, rtol=1e-12, atol=1e-14).y[:, -1]
    return x


def test_catalog_example_accepted(pendulum):
    assert P.check_assumptions(pendulum)
    assert np.allclose(pendulum.jac_F((0, 0)), [[0, 1], [-1, 0]])
    assert np.array_equal(pendulum.jac_G((0, 0), 0), np.zeros((2, 2)))


@pytest.mark.parametrize(
    "doc, name",
    [
        ({"F": [["add", "x2", 1], 0], "G": [[0, 1]]}, "F(0) = 0"),
        ({"F": ["x2", 0], "G": [[0, ["add", 1, "x1"]]]}, "DG(0) = 0"),
        ({"F": ["x1", "x2"], "G": [[0, 1]]}, "rank[G_i(0), DF(0)G_i(0)] = 2"),
    ],
)
def test_assumption_violations_are_named(doc, name):
    with pytest.raises(P.AssumptionViolation) as exc:
        P.load_planar(doc)
    assert exc.value.assumption == name


def test_seed_costates(pendulum):
    z, w = P.seed_costates(pendulum)
    assert np.allclose(z, [1, 0]) and np.allclose(w, [-1, 0])


def test_two_independent_inputs_have_empty_set():
    ps = P.PlanarSystem(*_fields(["x2", 0], [[1, 0], [0, 1]]))
    with pytest.raises(P.EmptySingularSet):
        P.seed_costates(ps)


def _fields(F, G):
    from mintime.expr import parse

    return [parse(e) for e in F], [[parse(e) for e in g] for g in G]


@given(st.floats(0, 2 * math.pi))
def test_seed_costates_rotate_with_G(theta):
    c, s = math.cos(theta), math.sin(theta)
    F, G = _fields(["x2", 0], [[c, s]])
    z, _ = P.seed_costates(P.PlanarSystem(F, G))
    assert abs(z @ [c, s]) < 1e-12
    assert np.allclose(z, [s, -c]) or np.allclose(z, [-s, c])


def test_arcs_hamiltonian_and_switching(pendulum):
    for a in P.singular_arcs(pendulum, R_MAX):
        assert a.max_abs_h() <= 1e-6
        assert a.min_lam() >= 1e-3
        assert a.min_gdot() > 0.1
        # the control never switches along the arc after t = 0
        assert np.all(a.u[1:] == a.u[1])


def test_arcs_are_reflections(pendulum):
    a, b = P.singular_arcs(pendulum, R_MAX)
    assert np.allclose(a.x, -b.x, atol=1e-14)


def test_trivial_arc(pendulum):
    a = P.singular_trajectory(pendulum, [1, 0], 0.0)
    assert len(a.t) == 1 and np.array_equal(a.x[0], [0, 0])


def test_arc_matches_scipy(pendulum):
    a = P.singular_trajectory(pendulum, [1, 0], R_MAX)
    sigma = -float(a.u[1, 0])  # arcs are reversed trajectories x' = -F - G u
    x = solve_ivp(lambda t, x: [-x[1], math.sin(x[0]) + sigma * (1 + x[0] ** 2)], (0, R_MAX), [0, 0],
                  rtol=1e-12, atol=1e-14).y[:, -1]
    assert np.allclose(a.x[-1], x, atol=1e-10)


def test_planar_double_integrator_closed_form(planar_di):
    rng = np.random.default_rng(0)
    X = rng.uniform(-0.05, 0.05, (4000, 2))
    T = P.front_stack(planar_di, R_MAX).times(X)
    ok = ~np.isnan(T)
    assert ok.mean() > 0.95
    assert np.max(np.abs(T[ok] - closed_form(X[ok]))) <= 1e-8


def test_planar_mintime_scipy_oracle(pendulum):
    rng = np.random.default_rng(1)
    st = P.front_stack(pendulum, R_MAX)
    for _ in range(100):
        sigma = rng.choice([-1.0, 1.0])
        T = rng.uniform(0.01, R_MAX)
        x = two_piece_point(sigma, T, rng.uniform(0, T))
        assert abs(st.times(x[None, :])[0] - T) <= 1e-8


def test_planar_mintime_on_arc(pendulum):
    assert P.planar_mintime(pendulum, [0, 0]) == 0.0
    a = P.singular_trajectory(pendulum, [1, 0], R_MAX)
    for t in (0.05, 0.2, 0.45):
        j = int(np.argmin(np.abs(a.t - t)))
        assert abs(P.planar_mintime(pendulum, a.x[j], r_max=R_MAX) - a.t[j]) <= 1e-4


def test_planar_mintime_outside(pendulum):
    with pytest.raises(P.OutsideValidatedRegime):
        P.planar_mintime(pendulum, [0.9, 0.9], r_max=R_MAX)


def test_linearization_agreement(pendulum):
    # DF(0) and G(0) give the harmonic oscillator
    lin = make_system([[0, 1], [-1, 0]], [[0], [1]])
    for s in (0.04, 0.02, 0.01):
        x = np.array([0.3, -0.7]) * s
        Tp = P.planar_mintime(pendulum, x, r_max=R_MAX)
        Tl = mintime_bisection(lin, x).T
        assert abs(Tp / Tl - 1.0) <= 10 * s


def test_fronts_convex_nested_shrinking(pendulum):
    with warnings.catch_warnings():
        warnings.simplefilter("error", P.RegimeWarning)
        fronts = [P.extremal_front(pendulum, r, 128) for r in (0.05, 0.1, 0.2)]
    for Fr in fronts:
        assert P.convexity_defect(Fr) <= 1e-6
    # every vertex of an inner front is strictly inside the next one
    for inner, outer in zip(fronts, fronts[1:]):
        e = np.roll(outer, -1, 0) - outer
        for q in inner:
            w = q - outer
            assert np.all(e[:, 0] * w[:, 1] - e[:, 1] * w[:, 0] > 0)
    diam = [np.max(np.linalg.norm(Fr[:, None] - Fr[None], axis=2)) for Fr in fronts]
    assert diam[0] < diam[1] < diam[2] and diam[0] < 0.15
    assert np.array_equal(P.extremal_front(pendulum, 0.0), np.zeros((1, 2)))


def test_front_close_to_linearized_reachable_set(pendulum):
    from mintime.reach import support

    lin = make_system([[0, 1], [-1, 0]], [[0], [1]])
    r = 0.1
    Fr = P.extremal_front(pendulum, r, 256)
    for a in np.linspace(0, 2 * math.pi, 24, endpoint=False):
        z = np.array([math.cos(a), math.sin(a)])
        assert abs(np.max(Fr @ z) - support(lin, z, r)) <= r**2


def test_invariance(pendulum):
    for a in P.singular_arcs(pendulum, R_MAX):
        checks = P.verify_invariance(pendulum, a, n=20)
        assert len(checks) == 20 and all(c.ok() for c in checks)


def test_validated_horizon(pendulum):
    assert P.validated_horizon(pendulum) >= R_MAX
    with pytest.raises(P.OutsideValidatedRegime):
        P.singular_trajectory(pendulum, [1, 0], 10.0)


def test_hamiltonian_constant_along_extremal():
    # h = <F, p> - |<G, p>| along an arc of a system with state-dependent G
    ps = P.load_planar({"F": ["x2", ["sub", 0, "x1"]], "G": [[0, ["add", 1, ["pow", "x1", 2]]]]})
    for a in P.singular_arcs(ps, 0.25):
        assert a.max_abs_h() <= 1e-9
