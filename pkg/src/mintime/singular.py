"""The singular set S of the minimum time function and its small-time strata.

A point of S is x = Phi(r, zeta) = sum_i int_0^r e^{A(t - r)} b_i sign g+_i(t) dt
with g+_i(t) = <zeta, e^{At} b_i> and zeta a unit vector orthogonal to every b_i.
Equivalently x = E(r, zeta') with zeta' = e^{rA^T} zeta / |e^{rA^T} zeta|.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import expint, expm, numerical_rank, sphere_points
from .pmp import hamiltonian
from .reach import mintime_bisection, support
from .switching import find_zeros, zero_window_bound

Z_TOL = 1e-8
GAP_CAP = 10**6
RANK_TOL = 1e-9
MIN_BOXES = 8


class SingularSetEmpty(ValueError):
    """rank B = N, so no unit vector is orthogonal to every b_i."""


class NotInZ(ValueError):
    """A costate that is not orthogonal to span{b_i}."""


class SmallTimeViolation(ValueError):
    """Strata are only built for tau below the validated small-time bound."""


class InvarianceFailure(RuntimeError):
    def __init__(self, r, report):
        super().__init__(f"singular point failed verification at r={r:.17g}: {report}")
        self.r = r
        self.report = report


@dataclass(frozen=True)
class SingularPoint:
    x: np.ndarray
    r: float
    zeta: np.ndarray
    j: tuple  # j[m-1] = number of zeros of multiplicity m in [0, r]
    d: int
    branch: int
    zeros: tuple = field(default=(), repr=False)  # merged forward zeros (t, m)

    @property
    def switch_times(self):
        """Sign changes of the reversed-time control on (0, r), increasing."""
        return tuple(sorted(self.r - t for t, m in self.zeros if 0.0 < t < self.r and m % 2 == 1))


def complement_basis(sys):
    """Orthonormal basis (columns) of the orthogonal complement of span{b_i}."""
    if "complement" in sys._cache:
        return sys._cache["complement"]
    U, s, _ = np.linalg.svd(np.asarray(sys.B, dtype=float), full_matrices=True)
    Q = U[:, sys.k :]
    # fix signs so that the largest entry of each column is positive
    for c in range(Q.shape[1]):
        if Q[np.argmax(np.abs(Q[:, c])), c] < 0:
            Q[:, c] = -Q[:, c]
    sys._cache["complement"] = Q
    return Q


def sample_Z(sys, n, seed=0):
    """n quasi-uniform points of Z = {zeta in S^{N-1} : <zeta, b_i> = 0}."""
    if sys.k >= sys.N:
        raise SingularSetEmpty(f"rank B = {sys.k} = N: the singular set is empty")
    Q = complement_basis(sys)
    P = sphere_points(Q.shape[1], int(n), seed=seed)
    Z = P @ Q.T
    return Z / np.linalg.norm(Z, axis=1, keepdims=True) if len(Z) else Z.reshape(0, sys.N)


def project_to_Z(sys, zeta):
    """Project onto the complement of span{b_i} when the defect is below Z_TOL."""
    zeta = np.asarray(zeta, dtype=float)
    nz = float(np.linalg.norm(zeta))
    if nz == 0.0:
        raise NotInZ("zeta must be nonzero")
    zeta = zeta / nz
    defect = float(np.max(np.abs(zeta @ sys.B)))
    if defect >= Z_TOL:
        raise NotInZ(f"zeta is not orthogonal to span{{b_i}} (defect {defect:.3g})")
    if sys.k >= sys.N:
        raise SingularSetEmpty("rank B = N: the singular set is empty")
    Q = complement_basis(sys)
    p = Q @ (Q.T @ zeta)
    return p / np.linalg.norm(p)


def _merged_zeros(profiles, r):
    """Union of channel zeros; coincident times keep the largest multiplicity."""
    tol = 1e-9 * max(1.0, r)
    out = []
    for t, m in sorted(z for p in profiles for z in p.zeros):
        if out and t - out[-1][0] <= tol:
            out[-1] = (out[-1][0], max(out[-1][1], m))
        else:
            out.append((t, m))
    return tuple(out)


def _gap_class(times):
    if len(times) < 2:
        return 1
    gap = float(np.min(np.diff(times)))
    if gap <= 0.0:
        return GAP_CAP
    return int(min(math.ceil(1.0 / gap), GAP_CAP))


def singular_point(sys, zeta, r):
    """Phi(r, zeta) by exact integrals between the forward switching zeros."""
    sys.require_normal()
    r = float(r)
    if not r > 0.0:
        raise ValueError("r must be positive")
    zeta = project_to_Z(sys, zeta)
    A = np.asarray(sys.A, dtype=float)
    profiles = [find_zeros(sys, zeta, i, r, "forward") for i in range(sys.M)]
    # x = e^{-Ar} sum over pieces (a, c, s) of s (G(c) - G(a)), G(c) = int_0^c e^{At} b dt
    acc = np.zeros(sys.N)
    for i, prof in enumerate(profiles):
        b = sys.B[:, i]
        G = {0.0: np.zeros(sys.N)}
        for a, c, s in prof.pattern:
            for t in (a, c):
                if t not in G:
                    G[t] = expint(A, b, 0.0, t, sign=1)
            acc += s * (G[c] - G[a])
    x = expm(-A, r) @ acc
    zeros = _merged_zeros(profiles, r)
    j = [0] * (sys.N - 1)
    for _, m in zeros:
        j[min(m, sys.N - 1) - 1] += 1
    d = _gap_class([t for t, _ in zeros])
    return SingularPoint(x, r, zeta, tuple(j), d, int(profiles[0].initial_sign), zeros)


def transported_costate(sys, zeta, r):
    """zeta' = e^{rA^T} zeta, normalized: the unit normal to R_r at Phi(r, zeta)."""
    z = expm(np.asarray(sys.A).T, r) @ np.asarray(zeta, dtype=float)
    return z / np.linalg.norm(z)


@dataclass(frozen=True)
class SingularReport:
    h: float
    channels: tuple
    boundary: float
    mintime: float = None  # |T(x) - r| when requested

    def worst(self):
        vals = [abs(self.h), self.boundary, *self.channels]
        return max(vals)

    def ok(self, tol=1e-7, time_tol=1e-5):
        good = self.worst() <= tol
        if self.mintime is not None:
            good = good and self.mintime <= time_tol
        return good


def verify_singular(sys, p, check_mintime=False):
    """Residuals of h(x, zeta') = 0, <zeta', e^{-Ar} b_i> = 0 and x in bdry R_r."""
    zp = transported_costate(sys, p.zeta, p.r)
    h = hamiltonian(sys, p.x, zp).value
    v = expm(-np.asarray(sys.A), p.r) @ sys.B
    channels = tuple(abs(float(zp @ v[:, i])) for i in range(sys.M))
    boundary = abs(float(zp @ p.x) - support(sys, zp, p.r))
    dt = None
    if check_mintime:
        dt = abs(mintime_bisection(sys, p.x).T - p.r)
    return SingularReport(abs(h), channels, boundary, dt)


def r_grid(r_min, r_max, n_r):
    if n_r == 1:
        return np.array([float(r_max)])
    return np.geomspace(float(r_min), float(r_max), int(n_r))


def sample_singular(sys, n_zeta, r_min, r_max, n_r, seed=0, radii="geometric"):
    """Product sample over n_zeta points of Z and an r-grid on [r_min, r_max]."""
    Z = sample_Z(sys, n_zeta, seed=seed)
    if radii == "geometric":
        R = r_grid(r_min, r_max, n_r)
    else:
        R = np.linspace(float(r_min), float(r_max), int(n_r))
    return [singular_point(sys, z, r) for z in Z for r in R]


def stratum_costate(sys, ts, ref=None):
    """Unit zeta in Z whose forward switching function vanishes at the times ts.

    For rank B = 1 this is the null vector of [b, e^{A t_1} b, ..., e^{A t_j} b]^T
    (unique up to sign when j = N - 2).  The sign follows ``ref`` when given.
    """
    if sys.k != 1:
        raise ValueError("the switch-time parametrization needs rank B = 1")
    b = sys.B[:, 0]
    A = np.asarray(sys.A, dtype=float)
    rows = [b] + [expm(A, float(t)) @ b for t in ts]
    _, _, Vt = np.linalg.svd(np.array(rows), full_matrices=True)
    zeta = Vt[-1]
    if ref is not None and float(zeta @ ref) < 0.0:
        zeta = -zeta
    return zeta


def sample_top_stratum(sys, n, r_min, r_max, seed=0):
    """n singular points drawn uniformly in (r, forward switch times t_1 < ... < t_{N-2}).

    Uniform sampling of Z instead piles most points onto the lower strata.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(int(n)):
        r = rng.uniform(r_min, r_max)
        ts = np.sort(rng.uniform(0.0, r, sys.N - 2))
        zeta = stratum_costate(sys, ts) * (1.0 if rng.random() < 0.5 else -1.0)
        out.append(singular_point(sys, zeta, r))
    return out


def _chart(sys, theta, ref):
    zeta = stratum_costate(sys, theta[1:], ref)
    return singular_point(sys, zeta, theta[0])


def sample_local(sys, theta0, radius, n, seed=0, branch=1):
    """n points of S inside the ball of given radius around the chart point theta0.

    theta = (r, t_1, ..., t_{N-2}) with forward switch times 0 < t_1 < ... < r.
    Offsets drawn uniformly in the tangent ball are pulled back through the
    linearized chart, so the accepted points are close to area-uniform.
    """
    rng = np.random.default_rng(seed)
    theta0 = np.asarray(theta0, dtype=float)
    q = len(theta0)
    if q != sys.N - 1:
        raise ValueError(f"theta must have N - 1 = {sys.N - 1} entries")
    ref = branch * stratum_costate(sys, theta0[1:])
    p0 = _chart(sys, theta0, ref)
    x0 = p0.x
    e = 1e-6 * max(1.0, float(theta0[0]))
    J = np.empty((sys.N, q))
    for c in range(q):
        d = np.zeros(q)
        d[c] = e
        J[:, c] = (_chart(sys, theta0 + d, ref).x - _chart(sys, theta0 - d, ref).x) / (2 * e)
    U, _ = np.linalg.qr(J)
    Jp = np.linalg.pinv(J)
    want = sys.N - 2
    out = []
    tries = 0
    while len(out) < n:
        tries += 1
        if tries > 20 * n + 1000:
            raise RuntimeError("local sampler acceptance too low; reduce the radius")
        w = rng.standard_normal(q)
        w *= 1.1 * radius * rng.random() ** (1.0 / q) / np.linalg.norm(w)
        th = theta0 + Jp @ (U @ w)
        ts = th[1:]
        if th[0] <= 0.0 or np.any(ts <= 0.0) or np.any(ts >= th[0]) or np.any(np.diff(ts) <= 0.0):
            continue
        p = _chart(sys, th, ref)
        if np.linalg.norm(p.x - x0) >= radius or len(p.switch_times) != want:
            continue
        out.append(p)
    return p0, out


def small_time_bound(sys):
    """tau~ = tau_bar / 2, the horizon up to which strata are built."""
    return 0.5 * zero_window_bound(sys)


def rank_check(sys, switch_times, channel=0):
    """Numerical rank of [e^{-A s_1} b, ..., e^{-A s_j} b] at tolerance 1e-9."""
    s = [float(t) for t in switch_times]
    if not s:
        return 0
    b = sys.B[:, channel]
    cols = np.column_stack([expm(-np.asarray(sys.A), t) @ b for t in s])
    return numerical_rank(cols, RANK_TOL)


@dataclass
class StratumSample:
    tau: float
    j: int
    points: list
    switch_times: list  # reversed-time switch tuples, one per point
    rank_report: list

    @property
    def families(self):
        """Points split by the sign of the reversed control right after s = 0."""
        out = {}
        for p in self.points:
            out.setdefault(_reversed_start_sign(p), []).append(p)
        return out

    def distinct(self, tol=1e-9):
        reps = []
        for p in self.points:
            if all(np.linalg.norm(p.x - q) > tol * (1.0 + np.linalg.norm(q)) for q in reps):
                reps.append(p.x)
        return reps


def _reversed_start_sign(p):
    # the reversed control near s = 0 is the forward sign pattern near t = r
    last = [t for t, m in p.zeros if t < p.r and m % 2 == 1]
    n_flips = len([t for t in last if t > 0.0])
    return int(p.branch * (-1) ** n_flips)


def stratify_slice(sys, tau, n_zeta, seed=0):
    """Group singular points of the slice S(tau) by interior switch count j."""
    tau = float(tau)
    bound = small_time_bound(sys)
    if tau > bound * (1.0 + 1e-12):
        raise SmallTimeViolation(
            f"tau={tau:g} exceeds the small-time bound {bound:g} (half the validated zero window); "
            "strata are only defined for small times"
        )
    strata = {j: StratumSample(tau, j, [], [], []) for j in range(sys.N - 1)}
    if n_zeta == 0:
        return [strata[j] for j in sorted(strata)]
    for z in sample_Z(sys, n_zeta, seed=seed):
        p = singular_point(sys, z, tau)
        st = p.switch_times
        s = strata.setdefault(len(st), StratumSample(tau, len(st), [], [], []))
        s.points.append(p)
        s.switch_times.append(st)
        s.rank_report.append(rank_check(sys, st))
    return [strata[j] for j in sorted(strata)]


def extend_by_invariance(sys, p, r_max, n=50, tol=1e-7):
    """Follow the reversed extremal through p with the same zeta, verifying every sample.

    Phi(., zeta) is itself the reversed-dynamics trajectory of the control
    sign g+(t, zeta), so the continuation is Phi(r, zeta) for r in [p.r, r_max].
    """
    r_max = float(r_max)
    if r_max < p.r:
        raise ValueError("r_max must be at least p.r")
    if r_max == p.r:
        rs = [p.r]
    else:
        rs = np.linspace(p.r, r_max, int(n))
    out = []
    for r in rs:
        q = p if r == p.r else singular_point(sys, p.zeta, r)
        rep = verify_singular(sys, q)
        if not rep.ok(tol):
            raise InvarianceFailure(float(r), rep)
        out.append(q)
    return out


@dataclass(frozen=True)
class DimensionFit:
    dimension: float
    r2: float
    scales: tuple
    counts: tuple


def box_dimension(points, scales=None, levels=(2, 7), center=None, radius=None):
    """Slope of log(occupied boxes) against log(1/scale).

    Default scales are L/2^k for k in range(*levels), L the largest extent of
    the cloud.  With a window (center, radius) the grid is anchored at the
    center, only boxes whose centers lie within radius are counted, and the
    default scales are five consecutive radius/2^k starting at the first
    k >= 1 with at least MIN_BOXES occupied boxes.  Counting in a window keeps
    the one-sided boundary excess of a bounded patch out of the fit.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or len(P) == 0:
        raise ValueError("points must be a nonempty (n, N) array")
    windowed = center is not None
    if windowed:
        lo = np.asarray(center, dtype=float)
        L = float(radius)
        if not L > 0.0:
            raise ValueError("window radius must be positive")
    else:
        lo = P.min(axis=0)
        L = float(np.max(P.max(axis=0) - lo))
        if L == 0.0:
            return DimensionFit(0.0, 1.0, (), ())

    def count(eps):
        idx = np.unique(np.floor((P - lo) / eps).astype(np.int64), axis=0)
        if windowed:
            ctr = (idx + 0.5) * eps
            return int(np.sum(np.linalg.norm(ctr, axis=1) <= L))
        return len(idx)

    if scales is None:
        if windowed:
            k0 = 1
            while k0 < 6 and count(L / 2.0**k0) < MIN_BOXES:
                k0 += 1
            ks = range(k0, k0 + 5)
        else:
            ks = range(*levels)
        scales = [L / 2.0**k for k in ks]
    scales = np.asarray(scales, dtype=float)
    if len(scales) < 2 or np.any(scales <= 0) or len(np.unique(scales)) != len(scales):
        raise ValueError("need at least two distinct positive scales")
    counts = [count(eps) for eps in scales]
    if min(counts) == 0:
        raise ValueError("a scale has no occupied boxes in the window")
    xs = np.log(1.0 / scales)
    ys = np.log(np.asarray(counts, dtype=float))
    slope, icpt = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + icpt)
    ss = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return DimensionFit(float(slope), r2, tuple(float(s) for s in scales), tuple(counts))
