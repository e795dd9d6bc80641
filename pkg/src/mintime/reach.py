"""Support functions of reachable sets R_t, membership, and minimum-time solvers."""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .flow import flow_table
from .linalg import sphere_points

T_CAP = 1e3


class UnreachableError(RuntimeError):
    """No bracket for T(x) below the desk-scale cap."""


class ShootingFailure(RuntimeError):
    pass


@dataclass
class MinTimeResult:
    T: float
    zeta_star: np.ndarray
    solver: str
    residual: float
    converged: bool = True


def default_tol(x):
    return 1e-8 * (1.0 + float(np.linalg.norm(x)))


def _table(sys, t):
    sys.require_normal()
    return flow_table(sys, "reversed", t)


def _seeds(sys):
    key = ("seeds", sys.N)
    if key not in sys._cache:
        sys._cache[key] = np.ascontiguousarray(sphere_points(sys.N, 64 * sys.N))
    return sys._cache[key]


def support(sys, zeta, t):
    """sigma_{R_t}(zeta) = sum_i int_0^t |<zeta, e^{-As} b_i>| ds."""
    t = float(t)
    if t < 0:
        raise ValueError("t must be nonnegative")
    zeta = np.ascontiguousarray(zeta, dtype=float)
    tab = _table(sys, t)
    E = np.empty(sys.N)
    return float(K.endpoint(tab.W, tab.F, tab.h, tab.invfact, zeta, t, tab.top(), E))


def support_many(sys, Z, t):
    tab = _table(sys, float(t))
    Z = np.ascontiguousarray(np.atleast_2d(Z), dtype=float)
    return K.support_many(tab.W, tab.F, tab.h, tab.invfact, Z, float(t), tab.top())


def support_gap(sys, x, t):
    """f(t) = max over unit zeta of <zeta, x> - sigma_t(zeta), with its maximizer."""
    x = np.ascontiguousarray(x, dtype=float)
    tab = _table(sys, float(t))
    v, z = K.gap_global(tab.W, tab.F, tab.h, tab.invfact, x, float(t), _seeds(sys), tab.top(), 6, 400)
    return float(v), z


def membership(sys, x, t, tol=None):
    """Classify x against R_t: 'interior', 'boundary' or 'outside', with the maximizing zeta."""
    x = np.asarray(x, dtype=float)
    tol = default_tol(x) if tol is None else tol
    if float(t) == 0.0:
        return ("boundary" if not np.any(x) else "outside"), _unit_or_axis(x)
    f, z = support_gap(sys, x, t)
    if f > tol:
        return "outside", z
    if f < -tol:
        return "interior", z
    return "boundary", z


def _unit_or_axis(x):
    n = np.linalg.norm(x)
    if n > 0:
        return x / n
    e = np.zeros(len(x))
    e[0] = 1.0
    return e


def mintime_bisection(sys, x, tol=None, warm=None, t_hint=None):
    """T(x) by bisection on the sign of the support gap f(t).

    warm (a costate) and t_hint (a nearby value of T) only speed up the
    bracketing; the answer does not depend on them beyond tol.
    """
    x = np.ascontiguousarray(x, dtype=float)
    if x.shape != (sys.N,) or not np.all(np.isfinite(x)):
        raise ValueError(f"x must be a finite {sys.N}-vector")
    tol = default_tol(x) if tol is None else float(tol)
    tab = _table(sys, 4.0)
    w = np.zeros(sys.N) if warm is None else np.ascontiguousarray(warm, dtype=float)
    if t_hint is not None:
        t0 = 0.5 * float(t_hint)
    elif np.any(x):
        # the hyperplane time of x/|x| is a lower bound on T(x)
        nx = float(np.linalg.norm(x))
        t0 = max(K.hyperplane_time(tab.W, tab.F, tab.h, tab.invfact, x / nx, nx, tab.top(), tab.horizon), 0.0)
    else:
        t0 = 0.0
    while True:
        T, z, res, status = K.mintime_bisect(
            tab.W, tab.F, tab.h, tab.invfact, x, tol, tab.top(), tab.horizon, T_CAP, w, t0
        )
        if status == 2:
            tab.ensure(min(2.0 * T, 1.25 * T_CAP))
            continue
        if status == 1:
            raise UnreachableError(f"no bracket for T(x) with t <= {T_CAP:g}")
        return MinTimeResult(float(T), z, "bisection", float(res), bool(res <= max(tol, 1e-12)))


def _vec(tab, i, s, m=0):
    """(sA)^m e^{sA s} b_i from the table."""
    k = min(max(int(s / tab.h), 0), tab.K1 - 1)
    d = s - k * tab.h
    J = tab.J - m
    w = (d ** np.arange(J)) * tab.invfact[:J]
    return w @ tab.W[i, k, m:]


def endpoint_jacobian(sys, zeta, r):
    """E(r, zeta) with dE/dr and dE/dzeta (the latter from the interior simple zeros)."""
    zeta = np.ascontiguousarray(zeta, dtype=float)
    tab = _table(sys, r)
    E = np.empty(sys.N)
    dz = np.empty((sys.N, sys.N))
    K.endpoint_d(tab.W, tab.F, tab.h, tab.invfact, zeta, float(r), tab.top(), E, dz)
    dr = np.zeros(sys.N)
    for i in range(sys.M):
        v = _vec(tab, i, r)
        dr += v * np.sign(float(zeta @ v))
    return E, dr, dz


def _tangent_basis(z):
    q, _ = np.linalg.qr(np.column_stack([z, np.eye(len(z))]))
    return q[:, 1:len(z)]


def _lm(sys, x, r, z, tol, max_iter=200):
    N = sys.N
    mu = 1e-3
    E, dr, dz = endpoint_jacobian(sys, z, r)
    R = E - x
    cost = float(R @ R)
    for _ in range(max_iter):
        if np.sqrt(cost) <= 1e-3 * tol:
            break
        U = _tangent_basis(z)
        Jm = np.column_stack([dr, dz @ U])
        g = Jm.T @ R
        H = Jm.T @ Jm
        improved = False
        for _ in range(40):
            step = np.linalg.solve(H + mu * (np.diag(np.diag(H)) + 1e-12 * np.eye(N)), -g)
            rn = r + step[0]
            if rn < 0:
                rn = 0.5 * r
            zn = z + U @ step[1:]
            zn /= np.linalg.norm(zn)
            En, drn, dzn = endpoint_jacobian(sys, zn, rn)
            Rn = En - x
            cn = float(Rn @ Rn)
            if cn < cost:
                r, z, E, dr, dz, R, cost = rn, zn, En, drn, dzn, Rn, cn
                mu = max(mu / 3.0, 1e-12)
                improved = True
                break
            mu *= 4.0
        if not improved:
            break
    return r, z, float(np.sqrt(cost))


def _support_iteration(tab, x, t, z, iters=60):
    """t <- r0(z_t), z_t the maximizer of <z, x> / sigma_t(z); increases while x is outside R_t."""
    z = np.ascontiguousarray(z, dtype=float)
    for _ in range(iters):
        g, z, _ = K.gauge_ascent(tab.W, tab.F, tab.h, tab.invfact, x, t, z, tab.top(), 200)
        if g <= 1.0:
            break
        tn = K.hyperplane_time(tab.W, tab.F, tab.h, tab.invfact, z, float(z @ x), tab.top(), tab.horizon)
        if tn < 0.0:
            return -1.0, z
        if tn <= t * (1.0 + 1e-15):
            break
        t = tn
    return t, z


def mintime_shooting(sys, x, tol=None, n_starts=8):
    """T(x) by solving E(r, zeta) = x over (r, unit zeta) with damped least squares."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.N,) or not np.all(np.isfinite(x)):
        raise ValueError(f"x must be a finite {sys.N}-vector")
    sys.require_normal()
    tol = default_tol(x) if tol is None else float(tol)
    if not np.any(x):
        return MinTimeResult(0.0, _unit_or_axis(x), "shooting", 0.0)
    # an absolute residual above |x| would accept r = 0 for tiny x
    tol = min(tol, 1e-6 * float(np.linalg.norm(x)))
    tab = _table(sys, 4.0)
    Z = np.ascontiguousarray(sphere_points(sys.N, 64 * sys.N, seed=1))
    Z = np.vstack([x / np.linalg.norm(x), Z])
    while True:
        r0 = K.hyperplane_times(tab.W, tab.F, tab.h, tab.invfact, Z, x, tab.top(), tab.horizon)
        # a seed whose hyperplane time is out of the table is retried on a longer one
        if np.any(r0 < 0.0) and np.any(Z @ x > 0.0) and tab.horizon < T_CAP:
            ok = r0 >= 0.0
            if not ok.any() or r0[ok].max() > 0.5 * tab.horizon:
                tab.ensure(2.0 * tab.horizon)
                continue
        break
    # the hyperplane time is a lower bound for T whose maximum over zeta is T
    order = np.argsort(-r0)
    best = None
    for q in order[:n_starts]:
        if r0[q] <= 0.0:
            break
        ra, za = K.hyperplane_ascent(tab.W, tab.F, tab.h, tab.invfact, x, Z[q], tab.top(), tab.horizon, 200)
        if ra < 0.0:
            ra, za = float(r0[q]), Z[q]
        r, z, res = _lm(sys, x, float(ra), za, tol)
        if best is None or res < best[2]:
            best = (r, z, res)
        if res <= tol:
            return MinTimeResult(float(r), z, "shooting", res)
    if best is None:
        raise ShootingFailure("no usable seed")
    # near the singular set E is locally constant in zeta and r0 has a long
    # plateau; a support iteration finds the basin, LM still decides
    ra, za = _support_iteration(tab, x, float(r0[order[0]]), Z[order[0]])
    if ra > 0.0:
        r, z, res = _lm(sys, x, ra, za, tol)
        if res <= tol:
            return MinTimeResult(float(r), z, "shooting", res)
        if res < best[2]:
            best = (r, z, res)
    raise ShootingFailure(f"shooting did not converge: best residual {best[2]:.3g} at r={best[0]:.6g}")


def normal_cone_at(sys, x, T, tol=None, seeds=None):
    """Deduplicated local maximizers of <zeta, x> - sigma_T(zeta) with value >= -tol.

    Empty when x is not on the boundary of R_T.  At a corner of R_T the
    maximizers fill a cone; the returned vectors are a sample of it.
    """
    x = np.ascontiguousarray(x, dtype=float)
    tol = default_tol(x) if tol is None else tol
    tab = _table(sys, float(T))
    S = _seeds(sys) if seeds is None else np.asarray(seeds, dtype=float)
    found = []
    for z0 in S:
        v, z, _ = K.ascend(tab.W, tab.F, tab.h, tab.invfact, x, float(T), z0.copy(), tab.top(), 500, False)
        if v < -tol:
            continue
        if all(np.arccos(np.clip(z @ w, -1.0, 1.0)) > 1e-6 for w in found):
            found.append(z)
    return np.array(found).reshape(-1, sys.N)
