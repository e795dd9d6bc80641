"""mintime command line.

Every command writes its CSV/JSON files and a manifest.json into
<out>/<manifest hash>/.  Exit codes: 0 success, 1 numeric failure, 2 usage.
"""

import argparse
import filecmp
import json
import math
import os
import sys as _sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import io
from .catalog import UnknownSystem, catalog, names
from .expr import ExpressionError
from .planar import AssumptionViolation
from .system import SystemDocumentError, load_system

DEFAULT_TOL = 1e-8
DEFAULT_SEED = 0


class UsageError(ValueError):
    pass


# --- systems ------------------------------------------------------------------

def resolve_system(ref, document=None):
    """(system, manifest entry) from catalog:name, a JSON path, or a stored document."""
    from .planar import load_planar

    if ref.startswith("catalog:"):
        return catalog(ref.split(":", 1)[1]), {"ref": ref}
    if document is None:
        p = Path(ref)
        if not p.is_file():
            raise UsageError(f"system file {ref!r} not found (use catalog:<name> for built-ins)")
        try:
            document = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"system file {ref!r} is not JSON: {exc}") from None
    if isinstance(document, dict) and "F" in document:
        return load_planar(document), {"ref": ref, "document": document}
    return load_system(document), {"ref": ref, "document": document}


def _is_planar(system):
    return hasattr(system, "F") and hasattr(system, "mintime_solver")


def _require_linear(system, cmd):
    if _is_planar(system):
        raise UsageError(f"{cmd} needs a linear system")


def _require_planar(system, cmd):
    if not _is_planar(system):
        raise UsageError(f"{cmd} needs a planar nonlinear system")


def _vector(text, name, n=None):
    try:
        v = [float(s) for s in str(text).split(",") if s.strip() != ""]
    except ValueError:
        raise UsageError(f"--{name} must be comma-separated numbers") from None
    if n is not None and len(v) != n:
        raise UsageError(f"--{name} needs {n} entries, got {len(v)}")
    if not all(math.isfinite(x) for x in v):
        raise UsageError(f"--{name} entries must be finite")
    return v


def _box(params, N):
    if params.get("box") is None:
        raise UsageError("--box is required")
    b = _vector(params["box"], "box", 2 * N)
    return [[b[2 * k], b[2 * k + 1]] for k in range(N)]


def _res(params, N):
    r = _vector(params.get("res") or "41", "res")
    if len(r) == 1:
        r = r * N
    if len(r) != N or any(x < 2 or x != int(x) for x in r):
        raise UsageError(f"--res needs 1 or {N} integers >= 2")
    return [int(x) for x in r]


def _point(params, N):
    if params.get("point") is None:
        raise UsageError("--point is required")
    return np.array(_vector(params["point"], "point", N))


# --- commands -----------------------------------------------------------------
# each takes (system, params, d) and returns a summary dict; files go into d

def cmd_mintime(system, p, d):
    x = _point(p, system.N)
    if _is_planar(system):
        from .planar import planar_mintime

        T = planar_mintime(system, x)
        out = {"T": T, "solver": "front-stack", "point": x}
    else:
        from .reach import mintime_bisection, mintime_shooting

        tol = p["tol"]
        if p.get("solver") == "shooting":
            r = mintime_shooting(system, x, tol)
        else:
            r = mintime_bisection(system, x, tol)
        out = {"T": r.T, "solver": r.solver, "zeta_star": r.zeta_star, "residual": r.residual,
               "converged": r.converged, "point": x}
    io.write_json(d / "mintime.json", out)
    return out


def cmd_grid(system, p, d):
    from .probe import eval_grid, solver_for

    fld = eval_grid(system, _box(p, system.N), _res(p, system.N), solve=solver_for(system, p["tol"]))
    io.write_grid(d / "grid.csv", fld)
    return {"nodes": int(fld.values.size), "failed": int(np.sum(fld.status == 2)),
            "T_max": float(np.nanmax(fld.values)), "solver": fld.solver}


def cmd_synth(system, p, d):
    _require_linear(system, "synth")
    from .pmp import bang_bang_from_costate, integrate_trajectory
    from .reach import mintime_bisection

    x = _point(p, system.N)
    r = mintime_bisection(system, x, p["tol"])
    if r.T == 0.0:
        out = {"T": 0.0, "switch_times": [], "terminal_error": 0.0}
        io.write_json(d / "synth.json", out)
        return out
    ctrl = bang_bang_from_costate(system, r.zeta_star, r.T)
    traj = integrate_trajectory(system, ctrl, x, "forward", samples=p.get("samples") or 201)
    io.write_table(d / "trajectory.csv", traj.header(), traj.rows(), {"T": r.T})
    # forward switch instants are r - s for the reversed-time switches s
    fwd = [sorted(r.T - s for s in sw) for sw in ctrl.switch_times]
    out = {
        "T": r.T,
        "zeta_star": r.zeta_star,
        "initial_control": [-float(v) for v in ctrl.signs(r.T * (1 - 1e-12))],
        "switch_times": fwd,
        "terminal_error": float(np.linalg.norm(traj.x[-1])),
        "max_abs_h_drift": float(np.ptp(traj.h)) if traj.h is not None else None,
    }
    io.write_json(d / "synth.json", out)
    return out


def cmd_singular(system, p, d):
    _require_linear(system, "singular")
    from .singular import sample_singular, verify_singular

    tau = p.get("tau") or 1.0
    n = p.get("samples") or 100
    n_r = p.get("n_r") or 8
    pts = sample_singular(system, n, tau / 16.0, tau, n_r, seed=p["seed"])
    reps = [verify_singular(system, q) for q in pts]
    io.write_singular_points(d / "singular.csv", pts, {"tau": tau})
    worst = max((r.worst() for r in reps), default=0.0)
    return {"points": len(pts), "worst_residual": worst, "ok": bool(worst <= 1e-7)}


def cmd_strata(system, p, d):
    _require_linear(system, "strata")
    from .singular import stratify_slice

    tau = p.get("tau") or 0.5
    n = p.get("samples") or 400
    strata = stratify_slice(system, tau, n, seed=p["seed"])
    rows = []
    summary = {}
    for s in strata:
        fams = s.families
        for q, rank in zip(s.points, s.rank_report):
            rows.append([*q.x, s.j, _family(fams, q), rank])
        summary[f"S_{s.j}"] = {
            "points": len(s.points),
            "distinct": len(s.distinct()),
            "families": len(fams),
            "full_rank": bool(all(rk == s.j for rk in s.rank_report)),
        }
    head = [f"x_{k + 1}" for k in range(system.N)] + ["j", "family", "rank"]
    io.write_csv(d / "strata.csv", head, rows, {"tau": tau})
    return summary


def _family(fams, q):
    for sign, pts in fams.items():
        if any(r is q for r in pts):
            return sign
    return 0


def cmd_check_ham(system, p, d):
    _require_linear(system, "check-ham")
    from .linalg import sphere_points
    from .pmp import verify_compham

    n = p.get("samples") or 1000
    rmax = p.get("tau") or 3.0
    rng = np.random.default_rng(p["seed"])
    Z = sphere_points(system.N, n, seed=p["seed"])
    R = rng.uniform(0.0, rmax, n)
    res = np.array([verify_compham(system, z, r) for z, r in zip(Z, R)])
    io.write_table(d / "compham.csv", ["r"] + [f"zeta_{k + 1}" for k in range(system.N)] + ["residual"],
                   np.column_stack([R, Z, res]))
    out = {"samples": n, "max_residual": float(res.max()), "ok": bool(res.max() <= 1e-8)}
    if not out["ok"]:
        raise NumericFailure(f"identity residual {res.max():.3g} exceeds 1e-8", out)
    return out


def cmd_probe(system, p, d):
    from .probe import GAMMA, LABELS, classify, eval_grid, solver_for

    fld = eval_grid(system, _box(p, system.N), _res(p, system.N), solve=solver_for(system, p["tol"]))
    rep = classify(fld, gamma=p.get("gamma") or GAMMA)
    io.write_grid(d / "grid.csv", fld)
    io.write_labels(d / "labels.csv", fld, rep, {"labels": " ".join(f"{k}={v}" for k, v in LABELS.items())})
    return {"counts": rep.counts(), "gamma": rep.gamma, "solver": fld.solver}


def cmd_dimension(system, p, d):
    _require_linear(system, "dimension")
    from .singular import box_dimension, sample_local

    tau = p.get("tau") or 0.75
    N = system.N
    theta = p.get("theta")
    if theta is None:
        theta = [tau] + [tau * (2.0 / 3.0) * (k + 1) / max(N - 2, 1) for k in range(N - 2)]
    else:
        theta = _vector(theta, "theta", N - 1)
    radius = p.get("radius") or 0.036
    n = p.get("samples") or 10000
    p0, pts = sample_local(system, theta, radius, n, seed=p["seed"])
    X = np.array([q.x for q in pts])
    fit = box_dimension(X, center=p0.x, radius=radius / 1.45)
    io.write_singular_points(d / "singular.csv", pts, {"theta": theta, "radius": radius})
    io.write_table(d / "boxes.csv", ["scale", "count"], np.column_stack([fit.scales, fit.counts]))
    return {"dimension": fit.dimension, "r2": fit.r2, "samples": len(pts), "theta": theta}


def cmd_planar_arc(system, p, d):
    _require_planar(system, "planar-arc")
    from .planar import singular_arcs, verify_invariance

    tau = p.get("tau") or 0.5
    arcs = singular_arcs(system, tau)
    rows, curves, info = [], [], []
    for k, a in enumerate(arcs):
        rows.extend([k, *row] for row in a.rows())
        curves.append((k, a.x))
        inv = verify_invariance(system, a, n=p.get("samples") or 20)
        info.append({
            "zeta0": a.zeta0, "max_abs_h": a.max_abs_h(), "min_lambda": a.min_lam(),
            "zeros": list(a.zeros), "gdot": list(a.gdot),
            "invariance_worst": max(max(c.h, c.normal, c.time) for c in inv),
            "invariance_ok": bool(all(c.ok() for c in inv)),
        })
    io.write_csv(d / "arcs.csv", ["arc"] + arcs[0].header(), rows, {"tau": tau})
    io.write_long(d / "arcs_long.csv", curves)
    return {"arcs": info}


def cmd_planar_front(system, p, d):
    _require_planar(system, "planar-front")
    from .planar import convexity_defect, extremal_front

    tau = p.get("tau") or 0.5
    n = p.get("samples") or 256
    levels = [tau * k / 4.0 for k in range(1, 5)]
    curves, defects = [], []
    for r in levels:
        P = extremal_front(system, r, n)
        curves.append((r, P))
        defects.append(convexity_defect(P))
    io.write_long(d / "fronts.csv", curves, {"lanes": n})
    return {"levels": levels, "convexity_defect": defects}


def cmd_catalog(system, p, d):
    if system is None:
        out = {"names": names()}
    elif _is_planar(system):
        out = system.to_doc()
    else:
        from .system import check_normality

        out = dict(system.to_document(), kalman_ranks=check_normality(system), normal=system.normal)
    io.write_json(d / "catalog.json", out)
    return out


COMMANDS = {
    "mintime": cmd_mintime,
    "grid": cmd_grid,
    "synth": cmd_synth,
    "singular": cmd_singular,
    "strata": cmd_strata,
    "check-ham": cmd_check_ham,
    "probe": cmd_probe,
    "dimension": cmd_dimension,
    "planar-arc": cmd_planar_arc,
    "planar-front": cmd_planar_front,
    "catalog": cmd_catalog,
}


class NumericFailure(RuntimeError):
    def __init__(self, msg, summary=None):
        super().__init__(msg)
        self.summary = summary


# --- driver -------------------------------------------------------------------

def _parser():
    ap = argparse.ArgumentParser(prog="mintime", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, system_required=True):
        sp.add_argument("--system", required=system_required, help="catalog:<name> or a JSON file")
        sp.add_argument("--tol", type=float, default=DEFAULT_TOL)
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
        sp.add_argument("--out", default="runs")
        sp.add_argument("--figures", action="store_true", help="render PNG figures into the run directory")
        for flag, kind in (("--point", str), ("--tau", float), ("--samples", int), ("--box", str), ("--res", str)):
            sp.add_argument(flag, type=kind)

    for name in COMMANDS:
        sp = sub.add_parser(name)
        common(sp, system_required=name != "catalog")
        if name == "mintime":
            sp.add_argument("--solver", choices=("bisection", "shooting"), default="bisection")
        if name == "probe":
            sp.add_argument("--gamma", type=float)
        if name == "dimension":
            sp.add_argument("--theta", help="r,t_1,..,t_{N-2}: chart point of the top stratum")
            sp.add_argument("--radius", type=float)
        if name == "singular":
            sp.add_argument("--n-r", dest="n_r", type=int)
    rr = sub.add_parser("rerun", help="rerun a manifest and compare outputs byte for byte")
    rr.add_argument("manifest")
    rp = sub.add_parser("report", help="render figures for an existing run directory")
    rp.add_argument("run_dir")
    return ap


def _threads():
    n = os.environ.get("MINTIME_THREADS")
    if n:
        import numba

        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def execute(command, params, system_entry, out, figures=False):
    """Run one command into <out>/<hash>/; returns (run dir, summary)."""
    ref = system_entry.get("ref") if system_entry else None
    system = None
    if ref is not None:
        system, system_entry = resolve_system(ref, system_entry.get("document"))
    man = io.manifest(command, params, params["seed"], {"tol": params["tol"]}, system_entry)
    d = io.run_dir(out, man)
    t0 = time.perf_counter()
    summary = COMMANDS[command](system, params, d)
    man["outputs"] = sorted(f.name for f in d.iterdir() if f.name != io.MANIFEST and f.suffix != ".png")
    io.write_json(d / "summary.json", summary)
    if "summary.json" not in man["outputs"]:
        man["outputs"] = sorted(man["outputs"] + ["summary.json"])
    man["wall_time"] = round(time.perf_counter() - t0, 6)
    io.write_json(d / io.MANIFEST, man)
    if figures:
        from .plotting import render

        render(d)
    return d, summary


def rerun(path):
    """Re-execute a manifest in a scratch directory; list outputs that differ."""
    man = io.read_manifest(path)
    src = Path(path) if Path(path).is_dir() else Path(path).parent
    with tempfile.TemporaryDirectory() as tmp:
        d, _ = execute(man["command"], man["parameters"], man["system"], tmp)
        diff = [f for f in man["outputs"] if not filecmp.cmp(src / f, d / f, shallow=False)]
    return diff


VECTOR_FLAGS = ("--point", "--box", "--res", "--theta")


def _join_vectors(argv):
    """--point -0.5,1 -> --point=-0.5,1 so a leading minus is not read as a flag."""
    out = []
    it = iter(argv)
    for a in it:
        if a in VECTOR_FLAGS:
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def main(argv=None):
    ap = _parser()
    argv = _join_vectors(_sys.argv[1:] if argv is None else list(argv))
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _threads()
        if args.command == "rerun":
            diff = rerun(args.manifest)
            print(json.dumps({"identical": not diff, "differing": diff}))
            return 0 if not diff else 1
        if args.command == "report":
            from .plotting import render

            for f in render(args.run_dir):
                print(f)
            return 0
        params = {k: v for k, v in vars(args).items() if k not in ("command", "system", "out", "figures")}
        entry = {"ref": args.system} if args.system else None
        d, summary = execute(args.command, params, entry, args.out, args.figures)
        print(io.json_text(dict(summary, run_dir=str(d))), end="")
        return 0
    except NumericFailure as exc:
        print(f"mintime: {exc}", file=_sys.stderr)
        if exc.summary is not None:
            print(io.json_text(exc.summary), end="", file=_sys.stderr)
        return 1
    except (UsageError, UnknownSystem, SystemDocumentError, ExpressionError, AssumptionViolation, FileNotFoundError) as exc:
        print(f"mintime: {exc}", file=_sys.stderr)
        return 2
    except Exception as exc:  # numeric failures from the solvers
        name = type(exc).__name__
        if name == "SmallTimeViolation":
            print(f"mintime: {exc}", file=_sys.stderr)
            return 2
        print(f"mintime: {name}: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    _sys.exit(main())
