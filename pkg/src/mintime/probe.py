"""Empirical Lipschitz probe for the minimum time function on grids.

A node is tested through difference quotients q(s) = max |T(p) - T(p')| / |p - p'|
over lattice-adjacent pairs in the 3^N block of spacing s centred at the node.
Near a point where T behaves like dist^{1/2}, q grows by about sqrt(2) per
halving of s; in smooth regions it levels off.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .reach import UnreachableError, mintime_bisection

LIPSCHITZ = 0
NON_LIPSCHITZ = 1
INCONCLUSIVE = 2
LABELS = {LIPSCHITZ: "Lipschitz", NON_LIPSCHITZ: "non-Lipschitz", INCONCLUSIVE: "inconclusive"}

GAMMA = 1.25
# smooth regions give ratios of 1 + O(h); below this the quotient counts as bounded
GAMMA_LIP = 1.02

STATUS_OK = 0
STATUS_UNCONVERGED = 1
STATUS_FAILED = 2


def linear_solver(sys, tol=None):
    """solve(x, hint) -> (T, hint, status) through bisection, with warm starts."""

    def solve(x, hint=None):
        warm, t_hint = (None, None) if hint is None else hint
        try:
            r = mintime_bisection(sys, x, tol, warm=warm, t_hint=t_hint)
        except (UnreachableError, ValueError, OverflowError):
            return math.nan, None, STATUS_FAILED
        status = STATUS_OK if r.converged else STATUS_UNCONVERGED
        return r.T, (r.zeta_star, r.T), status

    solve.tag = "bisection"
    return solve


def solver_for(sys, tol=None):
    if hasattr(sys, "mintime_solver"):
        return sys.mintime_solver(tol)
    return linear_solver(sys, tol)


@dataclass
class GridField:
    lo: np.ndarray
    hi: np.ndarray
    shape: tuple
    values: np.ndarray
    status: np.ndarray
    solver: str
    tol: float = None
    solve: object = field(default=None, repr=False, compare=False)

    @property
    def N(self):
        return len(self.shape)

    @property
    def spacing(self):
        return (self.hi - self.lo) / (np.asarray(self.shape) - 1)

    def coords(self, idx):
        return self.lo + np.asarray(idx) * self.spacing

    def nodes(self):
        axes = [np.linspace(a, b, n) for a, b, n in zip(self.lo, self.hi, self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def _box(box, N=None):
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("box must be a list of (low, high) pairs with low < high")
    if N is not None and box.shape[0] != N:
        raise ValueError(f"box has {box.shape[0]} axes, system has N={N}")
    return box[:, 0].copy(), box[:, 1].copy()


def eval_grid(sys, box, resolution, solve=None, tol=None):
    """T at every node of a regular grid; failures are flagged, never raised.

    Nodes are visited in row-major order and each solve is warm-started
    from the previous node, which keeps the sweep deterministic.
    """
    lo, hi = _box(box, sys.N)
    N = len(lo)
    shape = tuple([int(resolution)] * N) if np.isscalar(resolution) else tuple(int(r) for r in resolution)
    if any(n < 2 for n in shape):
        raise ValueError("resolution must be at least 2 per axis")
    solve = solve or solver_for(sys, tol)
    values = np.full(shape, math.nan)
    status = np.zeros(shape, dtype=np.int8)
    h = (hi - lo) / (np.asarray(shape) - 1)
    many = getattr(solve, "many", None)
    if many is not None:
        axes = [np.linspace(a, b, n) for a, b, n in zip(lo, hi, shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        T, st = many(np.stack([m.ravel() for m in mesh], axis=1))
        values[...] = T.reshape(shape)
        status[...] = st.reshape(shape)
        return GridField(lo, hi, shape, values, status, getattr(solve, "tag", "custom"), tol, solve)
    hint = None
    row_hint = None
    for idx in np.ndindex(*shape):
        if idx[-1] == 0:
            hint = row_hint
        x = lo + np.asarray(idx) * h
        T, new_hint, st = solve(x, hint)
        values[idx] = T
        status[idx] = st
        if new_hint is not None:
            hint = new_hint
            if idx[-1] == 0:
                row_hint = new_hint
    return GridField(lo, hi, shape, values, status, getattr(solve, "tag", "custom"), tol, solve)


def _pair_offsets(N):
    """Lattice-adjacent pairs (a, a + e) inside {-1, 0, 1}^N, each listed once."""
    block = list(itertools.product((-1, 0, 1), repeat=N))
    steps = [e for e in itertools.product((-1, 0, 1), repeat=N) if any(e) and e > tuple([0] * N)]
    pairs = []
    inside = set(block)
    for a in block:
        for e in steps:
            b = tuple(ai + ei for ai, ei in zip(a, e))
            if b in inside:
                pairs.append((a, b))
    return pairs


def _grid_quotients(fld, m):
    """q at spacing m cells for every node (NaN where the block leaves the grid or a value is missing)."""
    V = fld.values
    h = fld.spacing
    N = fld.N
    shape = np.asarray(fld.shape)
    q = np.full(fld.shape, -np.inf)
    valid = np.ones(fld.shape, dtype=bool)
    # nodes whose block fits in the grid
    for ax in range(N):
        sl = [slice(None)] * N
        sl[ax] = slice(0, m)
        valid[tuple(sl)] = False
        sl[ax] = slice(shape[ax] - m, None)
        valid[tuple(sl)] = False
    core = tuple(slice(m, n - m) for n in shape)

    def shifted(off):
        return V[tuple(slice(m + o * m, n - m + o * m) for o, n in zip(off, shape))]

    for a, b in _pair_offsets(N):
        dist = float(np.linalg.norm((np.asarray(b) - np.asarray(a)) * m * h))
        with np.errstate(invalid="ignore"):
            d = np.abs(shifted(b) - shifted(a)) / dist
        sub = q[core]
        np.fmax(sub, d, out=sub)
        q[core] = sub
        nan = np.isnan(shifted(a)) | np.isnan(shifted(b))
        vsub = valid[core]
        vsub &= ~nan
        valid[core] = vsub
    q[~valid] = math.nan
    return q


class _Refiner:
    """Values of T off the grid, cached on a lattice of the finest spacing used."""

    def __init__(self, fld, finest):
        self.fld = fld
        self.unit = fld.spacing / 2.0**finest
        self.scale = 2**finest
        self.cache = {}
        self.failed = set()

    def value(self, node, off_units, hint):
        key = tuple(int(node[i]) * self.scale + int(off_units[i]) for i in range(len(node)))
        if all(k % self.scale == 0 for k in key):
            idx = tuple(k // self.scale for k in key)
            if all(0 <= i < n for i, n in zip(idx, self.fld.shape)):
                v = self.fld.values[idx]
                return None if np.isnan(v) else float(v)
        if key not in self.cache:
            x = self.fld.lo + np.asarray(key, dtype=float) * self.unit
            T, _, st = self.fld.solve(x, hint)
            self.cache[key] = None if st == STATUS_FAILED else float(T)
        return self.cache[key]


def _block_quotient(ref, node, level, hint, pairs):
    step = ref.scale // 2**level
    vals = {}
    for a, b in pairs:
        for p in (a, b):
            if p not in vals:
                vals[p] = ref.value(node, [c * step for c in p], hint)
    best = 0.0
    for a, b in pairs:
        va, vb = vals[a], vals[b]
        if va is None or vb is None:
            return None
        dist = float(np.linalg.norm((np.asarray(b) - np.asarray(a)) * step * ref.unit))
        best = max(best, abs(va - vb) / dist)
    return best


@dataclass
class ProbeReport:
    labels: np.ndarray
    quotients: dict  # node index -> list of (spacing, q)
    gamma: float
    levels: tuple
    gamma_lip: float = GAMMA_LIP
    distance: dict = None  # statistics against a sample of S, in cells

    def nodes_with(self, label):
        return [tuple(int(i) for i in ix) for ix in np.argwhere(self.labels == label)]

    def counts(self):
        return {LABELS[k]: int(np.sum(self.labels == k)) for k in LABELS}


def _label_from(qs, gamma, gamma_lip=GAMMA_LIP):
    """Non-Lipschitz when every halving grows q by gamma; Lipschitz when the first one does not grow q."""
    ratios = []
    for (_, q0), (_, q1) in zip(qs[:-1], qs[1:]):
        if q0 is None or q1 is None:
            return INCONCLUSIVE
        if q0 == 0.0:
            ratios.append(math.inf if q1 > 0.0 else 1.0)
        else:
            ratios.append(q1 / q0)
    if not ratios or ratios[0] < gamma_lip:
        return LIPSCHITZ
    return NON_LIPSCHITZ if all(r >= gamma for r in ratios) else INCONCLUSIVE


def classify(fld, gamma=GAMMA, finest=2, singular=None, gamma_lip=GAMMA_LIP):
    """Label every node from quotients at spacings 2h, h, h/2, ..., h/2^finest.

    The two coarsest spacings come from the grid itself; nodes whose first
    growth ratio reaches gamma are refined with extra solves.  A node is
    Lipschitz when its first ratio stays below gamma_lip, non-Lipschitz when
    every ratio reaches gamma, and inconclusive otherwise (including nodes
    whose block leaves the grid).  With ``singular`` (points of S)
    the report carries distances between labelled nodes and the sample.
    """
    if finest < 1:
        raise ValueError("need at least three spacings (finest >= 1)")
    spacing0 = float(np.min(fld.spacing))
    q2 = _grid_quotients(fld, 2)
    q1 = _grid_quotients(fld, 1)
    labels = np.full(fld.shape, LIPSCHITZ, dtype=np.int8)
    quotients = {}
    ref = _Refiner(fld, finest)
    pairs = _pair_offsets(fld.N)
    for idx in np.ndindex(*fld.shape):
        a, b = q2[idx], q1[idx]
        if np.isnan(a) or np.isnan(b) or fld.status[idx] == STATUS_FAILED:
            labels[idx] = INCONCLUSIVE
            continue
        qs = [(2 * spacing0, float(a)), (spacing0, float(b))]
        first = _label_from(qs, gamma, gamma_lip)
        if first != NON_LIPSCHITZ:
            labels[idx] = first
            if first == INCONCLUSIVE:
                quotients[idx] = qs
            continue
        hint = None
        T0 = fld.values[idx]
        if np.isfinite(T0):
            hint = (None, float(T0))
        for level in range(1, finest + 1):
            q = _block_quotient(ref, idx, level, hint, pairs)
            qs.append((spacing0 / 2**level, q))
            if _label_from(qs, gamma, gamma_lip) != NON_LIPSCHITZ:
                break
        labels[idx] = _label_from(qs, gamma, gamma_lip)
        quotients[idx] = qs
    report = ProbeReport(labels, quotients, gamma, tuple(range(-1, finest + 1)), gamma_lip)
    if singular is not None:
        report.distance = distance_to_sample(fld, labels, singular)
    return report


def distance_to_sample(fld, labels, points):
    """Distances (in cells) between non-Lipschitz nodes and a sample of S, both ways."""
    P = np.asarray(points, dtype=float).reshape(-1, fld.N)
    cell = float(np.max(fld.spacing))
    lab = np.argwhere(labels == NON_LIPSCHITZ)
    X = fld.lo + lab * fld.spacing
    out = {"labelled": int(len(X)), "cell": cell}
    if len(X) and len(P):
        d = _nearest(X, P)
        out["labelled_to_S_max"] = float(d.max() / cell)
        out["labelled_to_S_mean"] = float(d.mean() / cell)
        inside = np.all((P >= fld.lo) & (P <= fld.hi), axis=1)
        if inside.any():
            out["S_to_labelled_max"] = float(_nearest(P[inside], X).max() / cell)
    return out


def _nearest(X, P):
    out = np.empty(len(X))
    chunk = max(1, 2_000_000 // max(len(P), 1))
    for s in range(0, len(X), chunk):
        d = np.linalg.norm(X[s : s + chunk, None, :] - P[None, :, :], axis=2)
        out[s : s + chunk] = d.min(axis=1)
    return out


def quotient_scan(sys_or_field, node, radii, solve=None):
    """Max difference quotient over lattice-adjacent pairs in the block of radius rho around node.

    The block has spacing rho / sqrt(N), so every pair lies within rho of
    the node.  Returns one value per radius, None where a solve failed.
    """
    node = np.asarray(node, dtype=float)
    N = len(node)
    if isinstance(sys_or_field, GridField):
        solve = solve or sys_or_field.solve
    else:
        solve = solve or solver_for(sys_or_field)
    pairs = _pair_offsets(N)
    T0, hint, _ = solve(node, None)
    out = []
    for rho in radii:
        s = float(rho) / math.sqrt(N)
        vals = {}
        for a, b in pairs:
            for p in (a, b):
                if p not in vals:
                    if not any(p):
                        vals[p] = None if math.isnan(T0) else T0
                    else:
                        T, _, st = solve(node + s * np.asarray(p, dtype=float), hint)
                        vals[p] = None if st == STATUS_FAILED else T
        if any(v is None for v in vals.values()):
            out.append(None)
            continue
        out.append(max(abs(vals[a] - vals[b]) / (s * float(np.linalg.norm(np.subtract(b, a)))) for a, b in pairs))
    return out


@dataclass(frozen=True)
class HolderFit:
    alpha: float
    stderr: float
    r2: float
    monotone: bool
    radii: tuple
    increments: tuple

    @property
    def confident(self):
        return self.monotone and self.r2 >= 0.99

    def interval(self, z=1.96):
        return self.alpha - z * self.stderr, self.alpha + z * self.stderr


def holder_fit(sys, center, direction, radii=None, solve=None):
    """Slope of log|T(center + rho d) - T(center)| against log rho (d normalized)."""
    center = np.asarray(center, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    radii = np.asarray(radii if radii is not None else 2.0 ** -np.arange(4, 13), dtype=float)
    solve = solve or solver_for(sys)
    T0, hint, st = solve(center, None)
    if st == STATUS_FAILED:
        raise ValueError("T could not be evaluated at the center")
    inc = []
    for rho in radii:
        T, _, st = solve(center + rho * d, hint)
        inc.append(abs(T - T0) if st != STATUS_FAILED else math.nan)
    inc = np.asarray(inc)
    ok = np.isfinite(inc) & (inc > 0)
    if ok.sum() < 3:
        raise ValueError("fewer than three usable increments")
    xs, ys = np.log(radii[ok]), np.log(inc[ok])
    (slope, icpt), cov = np.polyfit(xs, ys, 1, cov=True)
    resid = ys - (slope * xs + icpt)
    ss = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    order = np.argsort(radii[ok])
    monotone = bool(np.all(np.diff(inc[ok][order]) > 0))
    return HolderFit(float(slope), float(math.sqrt(max(cov[0, 0], 0.0))), r2, monotone, tuple(radii), tuple(inc))
