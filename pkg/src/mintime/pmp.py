"""Pontryagin synthesis for x' = Ax + Bu, |u_i| <= 1.

Conventions (zeta is a costate, r a horizon, v_i(s) = e^{-As} b_i):

=====================  ==================================================
switching profile      u~_i(s) = sign <zeta, v_i(s)>, s in (0, r)
endpoint               E(r, zeta) = sum_i int_0^r v_i(s) u~_i(s) ds
forward dynamics       y' = Ay + Bu from y(0) = E, u(t) = -u~(t); y(r) = 0
reversed dynamics      x' = -Ax - Bw from x(0) = 0, w(t) = -u~(r - t); x(r) = E
costate (forward t)    lambda(t) = e^{-t A^T} zeta = e^{(r - t) A^T} lambda(r)
minimized Hamiltonian  h(x, p) = <p, Ax> - sum_i |<p, b_i>|
=====================  ==================================================

The reversed trajectory at reversed time tau is the forward one at r - tau.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .flow import flow_table
from .linalg import expint, expm
from .switching import find_zeros


@dataclass(frozen=True)
class HamiltonianValue:
    value: float
    drift: float
    channels: tuple

    def __float__(self):
        return self.value


def hamiltonian(sys, x, zeta):
    """h(x, zeta) = <zeta, Ax> - sum_i |<zeta, b_i>| with its decomposition."""
    x = np.asarray(x, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    drift = float(zeta @ (sys.A @ x))
    channels = tuple(-abs(float(zeta @ b)) for b in sys.columns)
    return HamiltonianValue(drift + sum(channels), drift, channels)


@dataclass(frozen=True)
class BangBangControl:
    """Per-channel switching sign profile u~_i on (0, horizon)."""

    horizon: float
    initial_signs: tuple
    switch_times: tuple  # one strictly increasing tuple per channel
    zeta: np.ndarray = field(default=None, compare=False)

    @property
    def M(self):
        return len(self.initial_signs)

    def signs(self, s):
        """u~(s) for a scalar s (values at switch instants follow the left piece)."""
        out = np.empty(self.M)
        for i, (s0, sw) in enumerate(zip(self.initial_signs, self.switch_times)):
            n = int(np.searchsorted(np.asarray(sw), s, side="left"))
            out[i] = s0 * (-1) ** n
        return out

    def breakpoints(self):
        pts = {0.0, float(self.horizon)}
        for sw in self.switch_times:
            pts.update(float(t) for t in sw)
        return sorted(pts)


def _require_costate(zeta):
    zeta = np.asarray(zeta, dtype=float)
    if not np.any(zeta):
        raise ValueError("costate must be nonzero")
    return zeta


def bang_bang_from_costate(sys, zeta, r):
    """Switching sign profile of zeta on (0, r); switches at odd-multiplicity zeros."""
    sys.require_normal()
    zeta = _require_costate(zeta)
    r = float(r)
    signs, switches = [], []
    for i in range(sys.M):
        prof = find_zeros(sys, zeta, i, r, "reversed")
        if prof.pattern:
            signs.append(int(prof.initial_sign))
            switches.append(tuple(float(t) for t in prof.switch_times()))
        else:
            signs.append(int(np.sign(float(zeta @ sys.B[:, i]))) or 1)
            switches.append(())
    return BangBangControl(r, tuple(signs), tuple(switches), zeta.copy())


def endpoint(sys, zeta, r):
    """E(r, zeta) = sum_i int_0^r e^{-As} b_i sign<zeta, e^{-As} b_i> ds."""
    sys.require_normal()
    zeta = np.ascontiguousarray(_require_costate(zeta))
    r = float(r)
    if r < 0:
        raise ValueError("horizon must be nonnegative")
    tab = flow_table(sys, "reversed", r)
    E = np.empty(sys.N)
    K.endpoint(tab.W, tab.F, tab.h, tab.invfact, zeta, r, tab.top(), E)
    return E


def endpoint_many(sys, Z, r):
    sys.require_normal()
    tab = flow_table(sys, "reversed", float(r))
    Z = np.ascontiguousarray(np.atleast_2d(Z), dtype=float)
    return K.endpoint_many(tab.W, tab.F, tab.h, tab.invfact, Z, float(r), tab.top())


def compham_residual(sys, x, zeta, r):
    """|h(x, zeta) + sum_i |<zeta, e^{-Ar} b_i>|| with e^{-Ar} from a direct exponential."""
    v = expm(-sys.A, r) @ sys.B
    return abs(hamiltonian(sys, x, zeta).value + float(np.sum(np.abs(np.asarray(zeta) @ v))))


def verify_compham(sys, zeta, r):
    """Residual of the identity h(E(r, zeta), zeta) = -sum_i |<zeta, e^{-Ar} b_i>|."""
    return compham_residual(sys, endpoint(sys, zeta, r), zeta, r)


def costate(sys, zeta, t):
    """lambda(t) = e^{-t A^T} zeta (forward time along the extremal from E(r, zeta))."""
    return expm(-sys.A.T, t) @ np.asarray(zeta, dtype=float)


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    lam: np.ndarray = None
    h: np.ndarray = None

    def rows(self):
        cols = [self.t[:, None], self.x, self.u]
        if self.lam is not None:
            cols += [self.lam, self.h[:, None]]
        return np.hstack(cols)

    def header(self):
        N, M = self.x.shape[1], self.u.shape[1]
        head = ["t"] + [f"x_{k + 1}" for k in range(N)] + [f"u_{k + 1}" for k in range(M)]
        if self.lam is not None:
            head += [f"lambda_{k + 1}" for k in range(N)] + ["h"]
        return head


def _flow(A, B, x, u, dt, s):
    """Exact solution of x' = s(Ax + Bu) after time dt with constant u."""
    if dt == 0.0:
        return x.copy()
    return expm(s * A, dt) @ x + s * expint(A, B @ u, 0.0, dt, sign=s)


def integrate_trajectory(sys, control, start, direction="forward", samples=101):
    """Exact piecewise flow under a bang-bang control.

    forward:  y' = Ay + Bu, u(t) = -u~(t), t in [0, r]
    reversed: x' = -Ax - Bw, w(t) = -u~(r - t), t in [0, r]
    Samples are a uniform grid merged with the switch instants.  When the
    control carries its costate, lambda and h are filled in as well.
    """
    if direction not in ("forward", "reversed"):
        raise ValueError("direction must be 'forward' or 'reversed'")
    r = float(control.horizon)
    start = np.asarray(start, dtype=float)
    if r == 0.0:
        t = np.zeros(1)
        x = start[None, :].copy()
        u = np.zeros((1, sys.M))
    else:
        fwd = direction == "forward"
        sign = 1 if fwd else -1
        cuts = control.breakpoints() if fwd else [r - c for c in control.breakpoints()]
        grid = np.unique(np.concatenate([np.linspace(0.0, r, max(int(samples), 2)), cuts]))
        A, B = np.asarray(sys.A), np.asarray(sys.B)
        xs, us = [start.copy()], []
        cur = start.copy()
        for a, b in zip(grid[:-1], grid[1:]):
            # u is constant on each piece; sample it at the midpoint
            mid = 0.5 * (a + b)
            uu = -control.signs(mid if fwd else r - mid)
            us.append(uu)
            cur = _flow(A, B, cur, uu, b - a, sign)
            xs.append(cur)
        us.append(us[-1])
        t, x, u = grid, np.array(xs), np.array(us)
    lam = h = None
    if control.zeta is not None:
        tf = t if direction == "forward" else r - t
        lam = np.array([costate(sys, control.zeta, s) for s in tf])
        h = np.array([hamiltonian(sys, xx, ll).value for xx, ll in zip(x, lam)])
    return Trajectory(t, x, u, lam, h)
