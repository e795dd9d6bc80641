"""Planar control-affine systems x' = F(x) + G(x)u, |u_i| <= 1, near the origin.

Reversed extremals solve

    x' = -F(x) - G(x)u,  lambda' = (DF(x) + sum_i u_i DG_i(x))^T lambda,
    u_i = sign g_i,      g_i = <-G_i(x), lambda>,

from x(0) = 0, and h(x, p) = <F(x), p> - sum_i |<G_i(x), p>| is constant
along them.  Integration is classical RK4 with a fixed step; zeros of g_i
are located by bisection inside the step.

In small time every extremal leaves the origin along one of the two bang
arcs (u = +1 or u = -1) and switches at most a few times, so the front
at time r is traced by lanes that leave an arc at t* in [0, r] with the
opposite control.  A stack of such fronts gives T by bracketing.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import expr as E
from .singular import SingularSetEmpty


class AssumptionViolation(ValueError):
    def __init__(self, assumption, detail):
        super().__init__(f"assumption {assumption} violated: {detail}")
        self.assumption = assumption


class EmptySingularSet(SingularSetEmpty):
    pass


class OutsideValidatedRegime(RuntimeError):
    pass


class RegimeWarning(UserWarning):
    pass


EVENT_TOL = 1e-10
GDOT_MIN = 1e-8


class PlanarSystem:
    """F, G given as expression trees; derivatives are exact."""

    N = 2

    def __init__(self, F, G, box=((-1.0, 1.0), (-1.0, 1.0)), name="planar"):
        self.name = name
        self.F = tuple(F)
        self.G = tuple(tuple(g) for g in G)
        self.box = np.asarray(box, dtype=float)
        self.DF = tuple(tuple(f.diff(k) for k in range(2)) for f in self.F)
        self.DG = tuple(tuple(tuple(c.diff(k) for k in range(2)) for c in g) for g in self.G)
        self._F = [f.compile() for f in self.F]
        self._G = [[c.compile() for c in g] for g in self.G]
        self._DF = [[d.compile() for d in row] for row in self.DF]
        self._DG = [[[d.compile() for d in row] for row in g] for g in self.DG]
        self._cache = {}

    @property
    def M(self):
        return len(self.G)

    def f(self, x):
        return np.array([np.broadcast_to(f(x), np.shape(x[0])) for f in self._F], dtype=float)

    def g(self, x, i):
        return np.array([np.broadcast_to(c(x), np.shape(x[0])) for c in self._G[i]], dtype=float)

    def jac_F(self, x):
        return np.array([[float(d(x)) for d in row] for row in self._DF])

    def jac_G(self, x, i):
        return np.array([[float(d(x)) for d in row] for row in self._DG[i]])

    @property
    def L(self):
        """Largest first and second derivative norm of F and G_i over a 33 x 33 sample of the box."""
        if "L" not in self._cache:
            axes = [np.linspace(a, b, 33) for a, b in self.box]
            X = np.meshgrid(*axes, indexing="ij")
            X = (X[0].ravel(), X[1].ravel())
            fields = [self.F] + [g for g in self.G]
            best = 0.0
            for fld in fields:
                d1 = [c.diff(k) for c in fld for k in range(2)]
                d2 = [e.diff(k) for e in d1 for k in range(2)]
                for group in (d1, d2):
                    vals = np.array([np.broadcast_to(e(X), X[0].shape) for e in group])
                    best = max(best, float(np.sqrt((vals**2).sum(axis=0)).max()))
            self._cache["L"] = best
        return self._cache["L"]

    @property
    def step(self):
        return 1e-4 / (1.0 + self.L)

    def hamiltonian(self, x, p):
        x = tuple(np.asarray(x, dtype=float))
        p = np.asarray(p, dtype=float)
        val = float(self.f(x) @ p)
        for i in range(self.M):
            val -= abs(float(self.g(x, i) @ p))
        return val

    def mintime_solver(self, tol=None):
        return planar_solver(self, tol)

    def to_doc(self):
        return {
            "F": [f.to_json() for f in self.F],
            "G": [[c.to_json() for c in g] for g in self.G],
            "box": self.box.tolist(),
            "name": self.name,
        }


def load_planar(doc):
    """PlanarSystem from {"F": [e, e], "G": [[e, e], ...], "box": [[lo, hi], [lo, hi]]}.

    The assumptions F(0) = 0, DG(0) = 0 and rank[G_i(0), DF(0)G_i(0)] = 2
    are checked with exact derivatives; a violation names the assumption.
    """
    if not isinstance(doc, dict) or "F" not in doc or "G" not in doc:
        raise E.ExpressionError("planar document needs 'F' and 'G'")
    F = doc["F"]
    G = doc["G"]
    if len(F) != 2:
        raise E.ExpressionError("F must have two components")
    if not G or not isinstance(G[0], (list, tuple)) or (len(G) == 2 and not isinstance(G[0][0], (list, tuple, str, int, float))):
        raise E.ExpressionError("G must be a list of two-component fields")
    if len(G) > 2:
        raise E.ExpressionError("at most two inputs")
    Fe = [E.parse(e) for e in F]
    Ge = []
    for g in G:
        if len(g) != 2:
            raise E.ExpressionError("each G_i must have two components")
        Ge.append([E.parse(e) for e in g])
    box = doc.get("box", [[-1.0, 1.0], [-1.0, 1.0]])
    box = np.asarray(box, dtype=float)
    if box.shape != (2, 2) or np.any(box[:, 0] >= 0) or np.any(box[:, 1] <= 0):
        raise E.ExpressionError("box must be [[lo, hi], [lo, hi]] around the origin")
    ps = PlanarSystem(Fe, Ge, box, doc.get("name", "planar"))
    check_assumptions(ps)
    return ps


def check_assumptions(ps):
    o = (0.0, 0.0)
    F0 = ps.f(o)
    if np.max(np.abs(F0)) > 1e-12:
        raise AssumptionViolation("F(0) = 0", f"F(0) = {F0.tolist()}")
    A = ps.jac_F(o)
    for i in range(ps.M):
        DG = ps.jac_G(o, i)
        if np.max(np.abs(DG)) > 1e-10:
            raise AssumptionViolation("DG(0) = 0", f"DG_{i + 1}(0) = {DG.tolist()}")
        g0 = ps.g(o, i)
        Mx = np.column_stack([g0, A @ g0])
        if np.linalg.matrix_rank(Mx, tol=1e-10 * max(1.0, np.abs(Mx).max())) < 2:
            raise AssumptionViolation("rank[G_i(0), DF(0)G_i(0)] = 2", f"fails for i = {i + 1}")
    return True


def pendulum_like():
    """F = (x2, -sin x1), G = (0, 1 + x1^2) on [-1, 1]^2."""
    x1, x2 = E.var(0), E.var(1)
    F = (x2, E.neg(E.sin(x1)))
    G = ((E.const(0.0), E.add(E.const(1.0), E.power(x1, 2))),)
    return PlanarSystem(F, G, ((-1.0, 1.0), (-1.0, 1.0)), "planar-pendulum")


def seed_costates(ps):
    """The two unit zeta_0 with <G_i(0), zeta_0> = 0 for every input."""
    o = (0.0, 0.0)
    cols = [ps.g(o, i) for i in range(ps.M)]
    if ps.M == 2:
        if abs(cols[0][0] * cols[1][1] - cols[0][1] * cols[1][0]) > 1e-12 * np.linalg.norm(cols[0]) * np.linalg.norm(cols[1]):
            raise EmptySingularSet("G_1(0) and G_2(0) are independent: no costate annihilates both")
    g = cols[0]
    z = np.array([g[1], -g[0]]) / np.linalg.norm(g)
    return z, -z


# --- integration -----------------------------------------------------------

def _rhs(ps, Y, U):
    """d/dt of Y = (x1, x2, p1, p2) rows, U = (M, n) controls."""
    x = (Y[0], Y[1])
    out = np.empty_like(Y)
    f1, f2 = ps._F[0](x), ps._F[1](x)
    dx1, dx2 = -f1, -f2
    m = [[d(x) for d in row] for row in ps._DF]
    for i in range(ps.M):
        u = U[i]
        g = ps._G[i]
        dx1 = dx1 - u * g[0](x)
        dx2 = dx2 - u * g[1](x)
        dg = ps._DG[i]
        for j in range(2):
            for k in range(2):
                m[j][k] = m[j][k] + u * dg[j][k](x)
    out[0] = dx1
    out[1] = dx2
    out[2] = Y[2] * m[0][0] + Y[3] * m[1][0]
    out[3] = Y[2] * m[0][1] + Y[3] * m[1][1]
    return out


def _rk4(ps, Y, U, dt):
    k1 = _rhs(ps, Y, U)
    k2 = _rhs(ps, Y + 0.5 * dt * k1, U)
    k3 = _rhs(ps, Y + 0.5 * dt * k2, U)
    k4 = _rhs(ps, Y + dt * k3, U)
    return Y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _switching(ps, Y):
    """g_i = <-G_i(x), lambda> as an (M, n) array."""
    x = (Y[0], Y[1])
    out = np.empty((ps.M, Y.shape[1]))
    for i in range(ps.M):
        g = ps._G[i]
        out[i] = -(g[0](x) * Y[2] + g[1](x) * Y[3])
    return out


def _switching_rate(ps, Y, U):
    """d/dt g_i along the extremal with controls U."""
    x = (Y[0], Y[1])
    d = _rhs(ps, Y, U)
    out = np.empty((ps.M, Y.shape[1]))
    for i in range(ps.M):
        g = ps._G[i]
        dg = ps._DG[i]
        # -<DG_i x', lambda> - <G_i, lambda'>
        a1 = dg[0][0](x) * d[0] + dg[0][1](x) * d[1]
        a2 = dg[1][0](x) * d[0] + dg[1][1](x) * d[1]
        out[i] = -(a1 * Y[2] + a2 * Y[3]) - (g[0](x) * d[2] + g[1](x) * d[3])
    return out


@dataclass(frozen=True)
class SwitchEvent:
    lane: int
    t: float
    channel: int
    gdot: float
    lam_norm: float


def _step(ps, Y, U, dt, t0, lanes, events, depth=0):
    """RK4 step of length dt; controls flip where g_i changes sign, located to EVENT_TOL."""
    Yn = _rk4(ps, Y, U, dt)
    g = _switching(ps, Yn)
    hit = np.any(g * U < 0.0, axis=0)
    if not hit.any() or depth > 4:
        return Yn
    idx = np.nonzero(hit)[0]
    Ys, Us = Y[:, idx], U[:, idx]
    lo = np.zeros(len(idx))
    hi = np.full(len(idx), float(dt))
    while np.max(hi - lo) > EVENT_TOL:
        mid = 0.5 * (lo + hi)
        gm = _switching(ps, _rk4(ps, Ys, Us, mid))
        crossed = np.any(gm * Us < 0.0, axis=0) | np.any(gm == 0.0, axis=0)
        hi = np.where(crossed, mid, hi)
        lo = np.where(crossed, lo, mid)
    Yz = _rk4(ps, Ys, Us, hi)
    gz = _switching(ps, Yz)
    rate = _switching_rate(ps, Yz, Us)
    Unew = Us.copy()
    for c in range(len(idx)):
        for i in range(ps.M):
            if gz[i, c] * Us[i, c] <= 0.0:
                Unew[i, c] = -Us[i, c]
                events.append(
                    SwitchEvent(int(lanes[idx[c]]), float(t0 + hi[c]), i, float(rate[i, c]), float(np.hypot(Yz[2, c], Yz[3, c])))
                )
    U[:, idx] = Unew
    rest = dt - hi
    Yr = _step(ps, Yz, Unew, rest, t0 + hi, lanes[idx], events, depth + 1)
    U[:, idx] = Unew
    Yn[:, idx] = Yr
    return Yn


def _initial_controls(ps, Y):
    """u_i = sign g_i; where g_i vanishes the sign of its rate decides."""
    g = _switching(ps, Y)
    scale = np.hypot(Y[2], Y[3])
    U = np.sign(g)
    flat = np.abs(g) <= 1e-12 * np.maximum(scale, 1e-300)
    if flat.any():
        rate = _switching_rate(ps, Y, np.where(flat, 0.0, U))
        bad = flat & (np.abs(rate) <= GDOT_MIN * scale)
        if bad.any():
            raise OutsideValidatedRegime("switching function and its rate vanish together at the start")
        U = np.where(flat, np.sign(rate), U)
    return U


def _grid(tau, dt):
    n = max(int(math.ceil(float(tau) / dt - 1e-9)), 1)
    return n, float(tau) / n


# --- singular arcs ---------------------------------------------------------

@dataclass
class ExtremalArc:
    t: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    u: np.ndarray
    g: np.ndarray
    h: np.ndarray
    zeros: tuple = ()  # times where some g_i vanishes (including t = 0)
    gdot: tuple = ()  # rate of g_i at those zeros
    zeta0: np.ndarray = field(default=None)

    def max_abs_h(self):
        return float(np.max(np.abs(self.h)))

    def min_lam(self):
        return float(np.min(np.hypot(self.lam[:, 0], self.lam[:, 1])))

    def min_gdot(self):
        return float(np.min(np.abs(self.gdot))) if self.gdot else math.inf

    def rows(self):
        return np.column_stack([self.t, self.x, self.lam, self.u, self.g, self.h])

    def header(self):
        M = self.u.shape[1]
        return (
            ["t", "x_1", "x_2", "lambda_1", "lambda_2"]
            + [f"u_{i + 1}" for i in range(M)]
            + [f"g_{i + 1}" for i in range(M)]
            + ["h"]
        )


def singular_trajectory(ps, zeta0, tau, check_horizon=True):
    """Reversed extremal from (0, zeta0) on [0, tau], sampled at every integration step."""
    zeta0 = np.asarray(zeta0, dtype=float)
    tau = float(tau)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    o = (0.0, 0.0)
    if any(abs(float(ps.g(o, i) @ zeta0)) > 1e-10 * np.linalg.norm(zeta0) for i in range(ps.M)):
        raise ValueError("zeta0 must annihilate every G_i(0)")
    if check_horizon and tau > 0 and tau > validated_horizon(ps) * (1 + 1e-12):
        raise OutsideValidatedRegime(f"tau = {tau:g} exceeds the validated horizon {validated_horizon(ps):g}")
    Y = np.array([[0.0], [0.0], [zeta0[0]], [zeta0[1]]])
    M = ps.M
    zeros, gdot = [0.0], []
    if tau == 0.0:
        U = np.zeros((M, 1))
        rate0 = _switching_rate(ps, Y, U)
        return _arc(ps, [0.0], [Y[:, 0]], [np.sign(rate0[:, 0])], (0.0,), (float(rate0[0, 0]),), zeta0)
    rate0 = _switching_rate(ps, Y, np.zeros((M, 1)))
    gdot.append(float(np.min(np.abs(rate0[:, 0]))))
    if gdot[0] <= GDOT_MIN * np.linalg.norm(zeta0):
        raise OutsideValidatedRegime("the switching rate vanishes at the origin")
    U = np.sign(rate0)
    n, dt = _grid(tau, ps.step)
    ts, ys, us = [0.0], [Y[:, 0].copy()], [U[:, 0].copy()]
    events = []
    lanes = np.array([0])
    for j in range(n):
        Y = _step(ps, Y, U, dt, j * dt, lanes, events)
        ts.append((j + 1) * dt)
        ys.append(Y[:, 0].copy())
        us.append(U[:, 0].copy())
    for ev in events:
        if abs(ev.gdot) <= GDOT_MIN * ev.lam_norm:
            raise OutsideValidatedRegime(f"switching rate {ev.gdot:.3g} at the zero t = {ev.t:.6g}")
        zeros.append(ev.t)
        gdot.append(abs(ev.gdot))
    return _arc(ps, ts, ys, us, tuple(zeros), tuple(gdot), zeta0)


def _arc(ps, ts, ys, us, zeros, gdot, zeta0):
    Y = np.array(ys).T
    g = _switching(ps, Y).T
    lam = Y[2:].T
    x = Y[:2].T
    h = np.array([ps.hamiltonian(xx, ll) for xx, ll in zip(x, lam)])
    return ExtremalArc(np.array(ts), x, lam, np.array(us), g, h, zeros, gdot, zeta0)


def singular_arcs(ps, tau):
    return [singular_trajectory(ps, z, tau) for z in seed_costates(ps)]


# --- fronts ----------------------------------------------------------------

def _bang_arcs(ps, n, dt):
    """States along u = +1 and u = -1 from the origin at t = j dt, j = 0..n."""
    out = {}
    for s in (1.0, -1.0):
        Y = np.zeros((4, 1))
        U = np.full((ps.M, 1), s)
        xs = [Y[:2, 0].copy()]
        for _ in range(n):
            Y = _rk4(ps, Y, U, dt)
            xs.append(Y[:2, 0].copy())
        out[s] = np.array(xs)
    return out


def _lane_seeds(ps, arcs, starts, dt):
    """Lanes leaving the arc u = s at step j with control -s; lambda is normal to G there."""
    cols = []
    for s in (1.0, -1.0):
        for j in starts:
            x = arcs[s][j]
            G = ps.g((x[0], x[1]), 0)
            cols.append((j, s, x[0], x[1], -G[1], G[0]))
    cols.sort(key=lambda c: (c[0], -c[1]))
    start = np.array([c[0] for c in cols], dtype=int)
    U = np.array([[-c[1] for c in cols]])
    Y = np.array([[c[2] for c in cols], [c[3] for c in cols], [c[4] for c in cols], [c[5] for c in cols]])
    Y[2:] /= np.hypot(Y[2], Y[3])
    # orient lambda so that g leaves zero with the sign of the new control
    rate = _switching_rate(ps, Y, U)[0]
    if np.any(np.abs(rate) <= GDOT_MIN):
        raise OutsideValidatedRegime("switching rate vanishes at a lane seed")
    flip = np.sign(rate) != U[0]
    Y[2:, flip] *= -1.0
    return start, Y, U


def _run_lanes(ps, tau, lane_every, record_every=None, record_steps=()):
    """Integrate lanes to tau on a fixed grid.

    Returns {step: (chain, velocity)} at the recorded steps, the chain being
    the lanes leaving the u = +1 arc by increasing t* followed by those
    leaving the u = -1 arc; it runs once around the front.
    """
    if ps.M != 1:
        raise NotImplementedError("fronts are implemented for a single input")
    n, dt = _grid(tau, ps.step)
    arcs = _bang_arcs(ps, n, dt)
    starts = list(range(0, n + 1, lane_every))
    if starts[-1] != n:
        starts.append(n)
    start, Yall, Uall = _lane_seeds(ps, arcs, starts, dt)
    rec = set(record_steps)
    if record_every:
        rec.update(range(record_every, n + 1, record_every))
    rec.add(n)
    fronts = {}
    events = []
    na = int(np.searchsorted(start, 0, side="right"))
    lanes = np.arange(len(start))
    for j in range(n):
        if na:
            Yall[:, :na] = _step(ps, Yall[:, :na], Uall[:, :na], dt, j * dt, lanes[:na], events)
        na = int(np.searchsorted(start, j + 1, side="right"))
        if (j + 1) in rec:
            # lanes are sorted by (start, family +1 first)
            chain = np.concatenate([np.arange(0, na, 2), np.arange(1, na, 2)])
            Y = Yall[:, chain]
            vel = _rhs(ps, Y, Uall[:, chain])[:2]
            fronts[j + 1] = (Y[:2].T.copy(), vel.T.copy())
    return fronts, dt, arcs, events


def _polygon(pts):
    """Vertices sorted by polar angle, near-duplicates removed."""
    ang = np.arctan2(pts[:, 1], pts[:, 0])
    order = np.argsort(ang, kind="stable")
    P, a = pts[order], ang[order]
    scale = max(float(np.abs(P).max()), 1e-300)
    keep = np.ones(len(P), dtype=bool)
    keep[1:] = np.hypot(*(P[1:] - P[:-1]).T) > 1e-13 * scale
    return P[keep], a[keep]


def convexity_defect(P):
    """Largest negative normalized turn of a closed counterclockwise polygon (0 when convex)."""
    if len(P) < 3:
        return 0.0
    e = np.roll(P, -1, axis=0) - P
    e2 = np.roll(e, -1, axis=0)
    cr = e[:, 0] * e2[:, 1] - e[:, 1] * e2[:, 0]
    norm = np.hypot(*e.T) * np.hypot(*e2.T)
    ok = norm > 0
    turn = np.zeros(len(P))
    turn[ok] = cr[ok] / norm[ok]
    return float(max(0.0, -turn.min()))


def extremal_front(ps, r, n=256, check=True):
    """Closed polyline (angle-sorted vertices) of the boundary of R_r from n lanes."""
    r = float(r)
    if n < 16:
        raise ValueError("n must be at least 16")
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r == 0.0:
        return np.zeros((1, 2))
    if check and r > validated_horizon(ps) * (1 + 1e-12):
        raise OutsideValidatedRegime(f"r = {r:g} exceeds the validated horizon {validated_horizon(ps):g}")
    steps, _ = _grid(r, ps.step)
    every = max(steps // max(n // 2 - 1, 1), 1)
    fronts, _, _, _ = _run_lanes(ps, r, every)
    P, _ = _polygon(fronts[steps][0])
    d = convexity_defect(P)
    if d > 1e-6:
        warnings.warn(f"front at r = {r:g} is not convex (defect {d:.3g})", RegimeWarning, stacklevel=2)
    return P


def validated_horizon(ps, tau_max=1.0, lanes=64):
    """Largest dyadic tau <= tau_max with convex fronts and nonvanishing switching rates up to tau."""
    key = ("horizon", float(tau_max), int(lanes))
    if key in ps._cache:
        return ps._cache[key]
    levels = [tau_max / 2**k for k in range(8)]
    n, _ = _grid(tau_max, ps.step)
    rec = {max(int(round(t / tau_max * n)), 1): t for t in levels}
    try:
        fronts, _, _, events = _run_lanes(ps, tau_max, max(n // lanes, 1), record_steps=rec)
    except OutsideValidatedRegime:
        fronts, events = {}, []
    bad_time = min((ev.t for ev in events if abs(ev.gdot) <= GDOT_MIN * ev.lam_norm), default=math.inf)
    best = 0.0
    for step in sorted(rec):
        t = rec[step]
        if step not in fronts or t >= bad_time:
            break
        P, _ = _polygon(fronts[step][0])
        if convexity_defect(P) > 1e-6:
            break
        best = t
    ps._cache[key] = best
    return best


def _hermite(P0, V0, P1, V1, s, dr):
    s2, s3 = s * s, s * s * s
    return (
        (2 * s3 - 3 * s2 + 1) * P0
        + (s3 - 2 * s2 + s) * dr * V0
        + (-2 * s3 + 3 * s2) * P1
        + (s3 - s2) * dr * V1
    )


class FrontStack:
    """Fronts at r_k = k dr as lane chains, plus angle-sorted copies for bracketing.

    T(x) is bracketed between two stored fronts along the ray through x;
    inside the bracket the lanes near the ray are Hermite-interpolated in
    time and the crossing time is found by bisection.
    """

    WINDOW = 12

    def __init__(self, r, chains):
        self.r = np.asarray(r, dtype=float)
        self.dr = float(self.r[1] - self.r[0]) if len(self.r) > 1 else 0.0
        self.size = np.array([len(P) for P, _ in chains])
        self.start = np.concatenate([[0], np.cumsum(self.size)[:-1]])
        self.P = np.vstack([P for P, _ in chains])
        self.V = np.vstack([V for _, V in chains])
        keys, order = [], []
        for k, (P, _) in enumerate(chains):
            ang = np.arctan2(P[:, 1], P[:, 0])
            o = np.argsort(ang, kind="stable")
            keys.append(ang[o] + 8.0 * k)
            order.append(o)
        self.key = np.concatenate(keys)
        self.order = np.concatenate(order)

    @property
    def r_max(self):
        return float(self.r[-1])

    def polygon(self, k):
        st, m = self.start[k], self.size[k]
        return self.P[st + self.order[st : st + m]]

    def _edge(self, k, phi):
        pos = np.searchsorted(self.key, phi + 8.0 * k)
        st, m = self.start[k], self.size[k]
        i = pos - st
        return self.order[st + (i - 1) % m], self.order[st + i % m]

    def radius(self, k, phi):
        """Distance from the origin to the polygon of front k along the ray of angle phi."""
        k = np.asarray(k)
        phi = np.asarray(phi, dtype=float)
        st, m = self.start[k], self.size[k]
        ia, ib = self._edge(k, phi)
        A, B = self.P[st + ia], self.P[st + ib]
        d = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        e = B - A
        num = A[..., 0] * e[..., 1] - A[..., 1] * e[..., 0]
        den = d[..., 0] * e[..., 1] - d[..., 1] * e[..., 0]
        ra, rb = np.hypot(A[..., 0], A[..., 1]), np.hypot(B[..., 0], B[..., 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(np.abs(den) > 0, num / den, np.maximum(ra, rb))
        return np.where(m < 3, np.maximum(ra, rb), rho)

    def times(self, X):
        """T for each row of X (NaN outside the last front)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        rad = np.hypot(X[:, 0], X[:, 1])
        phi = np.arctan2(X[:, 1], X[:, 0])
        K = len(self.r) - 1
        lo = np.zeros(len(X), dtype=int)
        hi = np.full(len(X), K)
        out = np.full(len(X), math.nan)
        inside = rad <= self.radius(hi, phi)
        while True:
            open_ = inside & (hi - lo > 1)
            if not open_.any():
                break
            mid = (lo + hi) // 2
            rm = self.radius(np.where(open_, mid, 0), phi)
            up = open_ & (rm <= rad)
            lo = np.where(up, mid, lo)
            hi = np.where(open_ & ~up, mid, hi)
        r0 = np.where(lo == 0, 0.0, self.radius(lo, phi))
        r1 = self.radius(hi, phi)
        frac = np.clip((rad - r0) / np.where(r1 > r0, r1 - r0, 1.0), 0.0, 1.0)
        T = self.r[lo] + frac * (self.r[hi] - self.r[lo])
        sel = np.nonzero(inside & (lo >= 4) & (hi == lo + 1))[0]
        if len(sel):
            T[sel] = self._refine(X[sel], hi[sel], phi[sel], T[sel])
        out[inside] = T[inside]
        out[rad == 0.0] = 0.0
        return out

    def front_at(self, r):
        """Lane chain of the front at any r in [r_1, r_max] (Hermite in time)."""
        r = float(r)
        K = len(self.r) - 1
        k = min(max(int(math.floor(r / self.dr)), 1), K - 1)
        i = np.arange(k + 1)
        rr = np.full(k + 1, r)
        plus, _ = self._lane_state(np.ones(k + 1), i, rr)
        minus, _ = self._lane_state(-np.ones(k + 1), i, rr)
        return np.vstack([plus, minus])

    def _lane_state(self, sigma, i, r):
        """Position and velocity of lane (sigma, i) at time r (Hermite between stored fronts)."""
        K = len(self.r) - 1
        k = np.clip(np.floor(r / self.dr).astype(int), 1, K - 1)
        k = np.maximum(k, i)
        s = (r - self.r[k]) / self.dr
        c0 = np.where(sigma > 0, i, k + 1 + i)
        c1 = np.where(sigma > 0, i, k + 2 + i)
        a = self.start[k] + c0
        b = self.start[k + 1] + c1
        P0, V0, P1, V1 = self.P[a], self.V[a], self.P[b], self.V[b]
        s = s[..., None]
        s2, s3 = s * s, s * s * s
        dr = self.dr
        pos = (2 * s3 - 3 * s2 + 1) * P0 + (s3 - 2 * s2 + s) * dr * V0 + (-2 * s3 + 3 * s2) * P1 + (s3 - s2) * dr * V1
        vel = ((6 * s2 - 6 * s) * P0 + (-6 * s2 + 6 * s) * P1) / dr + (3 * s2 - 4 * s + 1) * V0 + (3 * s2 - 2 * s) * V1
        return pos, vel

    def _family_map(self, sigma, ts, r):
        """Psi_sigma(t*, r) with its partial derivatives, cubic in t* across four lanes."""
        K = len(self.r) - 1
        k = np.clip(np.floor(r / self.dr).astype(int), 1, K - 1)
        u = ts / self.dr
        base = np.clip(np.floor(u).astype(int) - 1, 0, None)
        base = np.minimum(base, k - 3)
        x = u - base  # position within the stencil nodes 0..3
        nodes = np.arange(4.0)
        w = np.ones(x.shape + (4,))
        dw = np.zeros(x.shape + (4,))
        for j in range(4):
            others = [m for m in range(4) if m != j]
            den = np.prod([nodes[j] - nodes[m] for m in others])
            terms = [x - nodes[m] for m in others]
            w[..., j] = terms[0] * terms[1] * terms[2] / den
            dw[..., j] = (terms[1] * terms[2] + terms[0] * terms[2] + terms[0] * terms[1]) / den
        psi = np.zeros(x.shape + (2,))
        dts = np.zeros_like(psi)
        dr = np.zeros_like(psi)
        for j in range(4):
            pos, vel = self._lane_state(sigma, base + j, r)
            psi += w[..., j, None] * pos
            dts += dw[..., j, None] * pos / self.dr
            dr += w[..., j, None] * vel
        return psi, dts, dr

    def _refine(self, X, k1, phi, fallback):
        """Newton on x = Psi_sigma(t*, r) for both families, seeded from the bracketing edge."""
        best = np.full(len(X), np.inf)
        a1, b1 = self._edge(k1, phi)
        scale = np.maximum(np.hypot(X[:, 0], X[:, 1]), 1e-300)
        for c in (a1, b1):
            n1 = k1 + 1
            for sigma in (1.0, -1.0):
                lane = np.where(c < n1, c, c - n1)
                own = np.where(c < n1, 1.0, -1.0)
                # seed with the vertex's own lane, or the matching corner lane of the other family
                ts = np.where(own == sigma, lane * self.dr, np.where(lane == 0, self.r[k1], 0.0))
                ts = np.minimum(ts, fallback)
                r = fallback.copy()
                sg = np.full(len(X), sigma)
                for _ in range(12):
                    psi, dts, dr = self._family_map(sg, ts, r)
                    res = psi - X
                    det = dts[:, 0] * dr[:, 1] - dts[:, 1] * dr[:, 0]
                    det = np.where(det == 0.0, 1e-300, det)
                    dts_step = (res[:, 0] * dr[:, 1] - res[:, 1] * dr[:, 0]) / det
                    dr_step = (dts[:, 0] * res[:, 1] - dts[:, 1] * res[:, 0]) / det
                    ts = np.clip(ts - dts_step, -self.dr, self.r[-1])
                    r = np.clip(r - dr_step, self.dr, self.r[-1])
                psi, _, _ = self._family_map(sg, ts, r)
                err = np.hypot(*(psi - X).T)
                eps = 1e-9 * self.dr
                ok = (err <= 1e-10 * scale + 1e-15) & (ts >= -eps) & (ts <= r + eps) & (np.abs(r - fallback) <= 2 * self.dr)
                best = np.where(ok, np.minimum(best, r), best)
        return np.where(np.isfinite(best), best, fallback)


def front_stack(ps, r_max, record_every=16):
    """Fronts every record_every integration steps up to r_max (cached per system)."""
    key = ("stack", float(r_max), int(record_every))
    if key in ps._cache:
        return ps._cache[key]
    if r_max > validated_horizon(ps) * (1 + 1e-12):
        raise OutsideValidatedRegime(f"r_max = {r_max:g} exceeds the validated horizon {validated_horizon(ps):g}")
    fronts, dt, _, _ = _run_lanes(ps, r_max, record_every, record_every=record_every)
    steps = sorted(fronts)
    if any(b - a != record_every for a, b in zip([0] + steps[:-1], steps)):
        # the last record may fall short of a full interval; drop it so spacing stays uniform
        steps = [s for s in steps if s % record_every == 0]
    chains = [(np.zeros((1, 2)), np.zeros((1, 2)))] + [fronts[s] for s in steps]
    st = FrontStack([0.0] + [s * dt for s in steps], chains)
    ps._cache[key] = st
    return st


def planar_mintime(ps, x, tol=None, r_max=None):
    """T(x) by bracketing x between stored fronts and interpolating along the ray."""
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        return 0.0
    st = front_stack(ps, r_max if r_max is not None else validated_horizon(ps))
    T = float(st.times(x[None, :])[0])
    if math.isnan(T):
        raise OutsideValidatedRegime(f"x = {x.tolist()} lies outside the front at r = {st.r_max:g}")
    return T


def planar_solver(ps, tol=None, r_max=None):
    """solve(x, hint) -> (T, hint, status) over a front stack, with a vectorized .many(X)."""

    def stack():
        return front_stack(ps, r_max if r_max is not None else validated_horizon(ps))

    def solve(x, hint=None):
        T = float(stack().times(np.asarray(x, dtype=float)[None, :])[0])
        return (T, None, 0) if not math.isnan(T) else (math.nan, None, 2)

    def many(X):
        T = stack().times(X)
        return T, np.where(np.isnan(T), 2, 0).astype(np.int8)

    solve.tag = "front-stack"
    solve.many = many
    return solve


# --- invariance --------------------------------------------------------------

@dataclass(frozen=True)
class InvarianceCheck:
    t: float
    h: float  # |h| / |lambda|
    normal: float  # support residual against the front at t
    time: float  # |T(x(t)) - t|

    def ok(self, tol=1e-5):
        return self.h <= tol and self.normal <= tol and self.time <= tol


def verify_invariance(ps, arc, n=20):
    """Re-verify n interior points of an arc as singular points of the truncated problem.

    At x(t) with costate lambda(t): h vanishes, lambda(t) is an outer normal
    of the front at t (support residual), and T(x(t)) = t.
    """
    idx = np.linspace(0, len(arc.t) - 1, n + 2).round().astype(int)[1:-1]
    out = []
    st = front_stack(ps, float(arc.t[-1]))
    for i in idx:
        t, x, lam = float(arc.t[i]), arc.x[i], arc.lam[i]
        ln = float(np.hypot(*lam))
        hv = abs(ps.hamiltonian(x, lam)) / ln
        P = st.front_at(t)
        z = lam / ln
        normal = max(float(np.max(P @ z)) - float(z @ x), 0.0)
        T = float(st.times(x[None, :])[0])
        out.append(InvarianceCheck(t, hv, normal, abs(T - t)))
    return out
