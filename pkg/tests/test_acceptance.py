"""The ten acceptance criteria, each at its stated tolerance; one pass/fail line per criterion."""

import json
import math
import time

import numpy as np
import pytest

from mintime import planar as P
from mintime import probe
from mintime.catalog import catalog
from mintime.catalog import closed_form_double_integrator as closed_form
from mintime.cli import main
from mintime.linalg import sphere_points
from mintime.pmp import verify_compham
from mintime.reach import mintime_bisection, mintime_shooting
from mintime.singular import (
    InvarianceFailure,
    box_dimension,
    extend_by_invariance,
    sample_local,
    sample_singular,
    stratify_slice,
    verify_singular,
)

from conftest import LINEAR

pytestmark = pytest.mark.slow


def switching_curve(n=40001, span=3.0):
    s = np.linspace(-span, span, n)
    return np.stack([-s * np.abs(s) / 2, s], 1)


@pytest.fixture(scope="module")
def di_grid():
    di = catalog("double-integrator")
    t0 = time.perf_counter()
    fld = probe.eval_grid(di, [(-2, 2), (-2, 2)], 101)
    return fld, time.perf_counter() - t0


def test_criterion_1_closed_form_grid(di_grid, criterion):
    fld, seconds = di_grid
    err = float(np.nanmax(np.abs(fld.values - closed_form(fld.nodes()).reshape(fld.shape))))
    failed = int(np.sum(fld.status != probe.STATUS_OK))
    ok = err <= 1e-4 and seconds <= 60.0 and failed == 0
    criterion(1, ok, f"101x101 double integrator: max error {err:.2e} (<= 1e-4), {seconds:.1f} s (<= 60 s), {failed} failed nodes")
    assert ok


def test_criterion_2_compham_identity(criterion):
    worst, slowest = 0.0, 0.0
    for name in LINEAR:
        s = catalog(name)
        rng = np.random.default_rng(2)
        Z = sphere_points(s.N, 10_000, seed=2)
        R = rng.uniform(0.0, 3.0, 10_000)
        t0 = time.perf_counter()
        res = max(verify_compham(s, z, r) for z, r in zip(Z, R))
        slowest = max(slowest, time.perf_counter() - t0)
        worst = max(worst, res)
    ok = worst <= 1e-8 and slowest <= 30.0
    criterion(2, ok, f"10^4 samples x 4 systems: max residual {worst:.2e} (<= 1e-8), slowest system {slowest:.1f} s (<= 30 s)")
    assert ok


def test_criterion_3_singular_points_verify(criterion):
    plans = {
        "double-integrator": (2, 500, 0.05, 2.0),
        "triple-integrator": (50, 20, 0.05, 1.5),
        "harmonic": (2, 500, 0.05, 2.0),
        "double-integrator-2input": (2, 500, 0.05, 2.0),
    }
    worst_res, worst_time, count = 0.0, 0.0, 0
    for name, (nz, nr, r0, r1) in plans.items():
        s = catalog(name)
        for p in sample_singular(s, nz, r0, r1, nr, seed=3, radii="linear"):
            rep = verify_singular(s, p, check_mintime=True)
            worst_res = max(worst_res, abs(rep.h), rep.boundary)
            worst_time = max(worst_time, rep.mintime)
            count += 1
    ok = worst_res <= 1e-7 and worst_time <= 1e-5 and count == 4000
    criterion(3, ok, f"{count} points of S: max |h|/boundary residual {worst_res:.2e} (<= 1e-7), "
                     f"max |T - r| {worst_time:.2e} (<= 1e-5), 10^3 per linear catalog system")
    assert ok


def test_criterion_4_probe_double_integrator(di_grid, criterion):
    fld, _ = di_grid
    rep = probe.classify(fld)
    X = fld.nodes()[rep.labels.ravel() == probe.NON_LIPSCHITZ]
    h = float(fld.spacing[0])
    dist = float(probe._nearest(X, switching_curve()).max() / h) if len(X) else math.inf
    on_axis = int(np.sum((np.abs(X[:, 1]) < 1e-12) & (np.abs(X[:, 0]) > 0.1)))
    ok = len(X) > 0 and dist <= 2.0 and on_axis == 0
    criterion(4, ok, f"{len(X)} non-Lipschitz nodes, max distance to the switching curve {dist:.2f} cells (<= 2), "
                     f"{on_axis} on the x1-axis beyond 0.1")
    assert ok


def test_criterion_5_box_dimension(criterion):
    out = {}
    for name, theta, radius, n, target, tol in [
        ("double-integrator", [1.0], 0.3, 10_000, 1.0, 0.1),
        ("triple-integrator", [0.75, 0.5], 0.036, 50_000, 2.0, 0.15),
    ]:
        s = catalog(name)
        p0, pts = sample_local(s, theta, radius, n, seed=5)
        fit = box_dimension(np.array([p.x for p in pts]), center=p0.x, radius=radius / 1.45)
        out[name] = (fit, abs(fit.dimension - target) <= tol and fit.r2 >= 0.98 and len(fit.scales) == 5 and len(pts) >= 10_000)
    ok = all(v[1] for v in out.values())
    di, ti = out["double-integrator"][0], out["triple-integrator"][0]
    criterion(5, ok, f"double integrator {di.dimension:.3f} (1.0 +- 0.1, R2 {di.r2:.4f}); "
                     f"triple integrator {ti.dimension:.3f} (2.0 +- 0.15, R2 {ti.r2:.4f}); 5 scales, R2 >= 0.98")
    assert ok


def test_criterion_6_holder_exponents(criterion):
    di = catalog("double-integrator")
    ti = catalog("triple-integrator")
    across = probe.holder_fit(di, [-0.5, 1.0], [1.0, 0.0])
    smooth = probe.holder_fit(di, [1.0, 0.0], [1.0, 0.0])
    # a point of the triple-integrator singular set, probed off the sheet
    x0 = sample_singular(ti, 8, 0.5, 0.5, 1)[3].x
    ti_fit = probe.holder_fit(ti, x0, [1.0, 0.0, 0.0], radii=2.0 ** -np.arange(6, 14))
    fits = [(across, 2), (smooth, 2), (ti_fit, 3)]
    bound_ok = all(f.alpha >= 1.0 / N - 0.05 for f, N in fits)
    ok = abs(across.alpha - 0.5) <= 0.05 and abs(smooth.alpha - 1.0) <= 0.05 and bound_ok
    criterion(6, ok, f"across curve alpha {across.alpha:.4f} (0.5 +- 0.05), off S {smooth.alpha:.4f} (1.0 +- 0.05), "
                     f"triple integrator {ti_fit.alpha:.4f}; global bound alpha >= 1/N - 0.05: {bound_ok}")
    assert ok


def test_criterion_7_strata(criterion):
    ti = catalog("triple-integrator")
    strata = {s.j: s for s in stratify_slice(ti, 0.5, 2000, seed=7)}
    s0, s1 = strata[0], strata[1]
    two_points = len(s0.distinct()) == 2
    two_families = len(s1.families) == 2 and all(len(v) > 0 for v in s1.families.values())
    full_rank = all(rk == 1 for rk in s1.rank_report) and len(s1.points) > 0
    # 100 slice points (all of S_1 first, then S_0) continued to r = 1
    start = (s1.points + s0.points)[:100]
    checked = 0
    extended = True
    for p in start:
        try:
            checked += len(extend_by_invariance(ti, p, 1.0, n=20))
        except InvarianceFailure:
            extended = False
    ok = two_points and two_families and full_rank and extended and len(start) == 100
    criterion(7, ok, f"S_0 distinct points {len(s0.distinct())} (2), S_1 families {len(s1.families)} (2) with "
                     f"{len(s1.points)} points all full rank: {full_rank}; {checked} points re-verified up to r = 1: {extended}")
    assert ok


def test_criterion_8_cross_solver(criterion):
    worst, fails, n = 0.0, 0, 0
    for name in LINEAR:
        s = catalog(name)
        X = np.random.default_rng(8).uniform(-2.0, 2.0, (1000, s.N))
        for x in X:
            T1 = mintime_bisection(s, x).T
            try:
                T2 = mintime_shooting(s, x).T
            except Exception:
                fails += 1
                continue
            worst = max(worst, abs(T1 - T2) / max(1.0, T1))
            n += 1
    ok = worst <= 1e-5 and fails == 0
    criterion(8, ok, f"{n} points over 4 systems: max |T_bisection - T_shooting| / max(1, T) {worst:.2e} (<= 1e-5), {fails} shooting failures")
    assert ok


def test_criterion_9_planar(pendulum, criterion):
    t0 = time.perf_counter()
    arcs = P.singular_arcs(pendulum, 0.5)
    max_h = max(a.max_abs_h() for a in arcs)
    min_lam = min(a.min_lam() for a in arcs)
    min_gdot = min(a.min_gdot() for a in arcs)
    inv = [c for a in arcs for c in P.verify_invariance(pendulum, a, n=20)]
    inv_ok = len(inv) == 40 and all(c.ok() for c in inv)
    fld = probe.eval_grid(pendulum, [(-0.045, 0.045), (-0.045, 0.045)], 201, solve=P.planar_solver(pendulum, r_max=0.5))
    rep = probe.classify(fld)
    X = fld.nodes()[rep.labels.ravel() == probe.NON_LIPSCHITZ]
    S = np.vstack([a.x for a in arcs])
    dist = float(probe._nearest(X, S).max() / fld.spacing[0]) if len(X) else math.inf
    seconds = time.perf_counter() - t0
    ok = (max_h <= 1e-6 and min_lam >= 1e-3 and min_gdot >= 0.1 and inv_ok and len(X) > 0
          and dist <= 2.0 and seconds <= 300.0 and np.all(fld.status == probe.STATUS_OK))
    criterion(9, ok, f"arcs: max|h| {max_h:.1e}, min|lambda| {min_lam:.3f}, min|g'| at zeros {min_gdot:.3f}; "
                     f"invariance at 2x20 times: {inv_ok}; {len(X)} labelled nodes within {dist:.2f} cells of the arcs (<= 2); "
                     f"{seconds:.0f} s (<= 300 s)")
    assert ok


RERUNS = [
    ["mintime", "--system", "catalog:triple-integrator", "--point", "0.4,-0.3,0.2"],
    ["grid", "--system", "catalog:double-integrator", "--box", "-1,1,-1,1", "--res", "11"],
    ["synth", "--system", "catalog:harmonic", "--point", "1.5,-0.5"],
    ["singular", "--system", "catalog:triple-integrator", "--samples", "30", "--seed", "4"],
    ["strata", "--system", "catalog:triple-integrator", "--tau", "0.5", "--samples", "200", "--seed", "1"],
    ["check-ham", "--system", "catalog:triple-integrator", "--samples", "300", "--seed", "9"],
    ["probe", "--system", "catalog:double-integrator", "--box", "-1,1,-1,1", "--res", "15"],
    ["dimension", "--system", "catalog:double-integrator", "--samples", "2000", "--seed", "2"],
    ["planar-arc", "--system", "catalog:planar-pendulum", "--tau", "0.2", "--samples", "5"],
    ["catalog"],
]


def test_criterion_10_determinism(tmp_path, capsys, criterion):
    identical, total = 0, 0
    for argv in RERUNS:
        assert main(argv + ["--out", str(tmp_path)]) == 0
        d = json.loads(capsys.readouterr().out)["run_dir"]
        code = main(["rerun", d])
        res = json.loads(capsys.readouterr().out)
        total += 1
        identical += int(code == 0 and res["identical"])
    ok = identical == total
    criterion(10, ok, f"{identical}/{total} manifests rerun to byte-identical outputs")
    assert ok
