"""CSV/JSON emission and run manifests.

Numbers are written with 17 significant digits so every double
round-trips.  A run directory is named by the hash of its manifest with the
wall time left out, which makes the directory name a function of the
inputs alone.
"""

import hashlib
import json
import math
from pathlib import Path

import numpy as np

MANIFEST = "manifest.json"
HASH_LEN = 16


def fmt(v):
    """One CSV field: integers as integers, floats with 17 significant digits."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def csv_text(header, rows, meta=None):
    lines = [f"# {k}: {_meta_value(v)}" for k, v in (meta or {}).items()]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _meta_value(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(fmt(x) for x in np.asarray(v).ravel())
    return fmt(v) if not isinstance(v, str) else v


def write_csv(path, header, rows, meta=None):
    Path(path).write_text(csv_text(header, rows, meta))
    return Path(path)


def read_csv(path):
    """(meta, header, rows as float array) from a file written by write_csv."""
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            meta[k] = v
        elif line:
            body.append(line.split(","))
    header = body[0]
    rows = np.array([[float(c) if c else math.nan for c in r] for r in body[1:]], dtype=float)
    return meta, header, rows.reshape(-1, len(header))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no nan/inf; keep them as strings
        return v if math.isfinite(v) else fmt(v)
    return obj


def json_text(obj):
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    Path(path).write_text(json_text(obj))
    return Path(path)


# --- manifests ----------------------------------------------------------------

def manifest(command, parameters, seed, tolerances, system):
    return {
        "command": command,
        "parameters": _plain(parameters),
        "seed": int(seed),
        "tolerances": _plain(tolerances),
        "system": _plain(system),
        "outputs": [],
        "wall_time": None,
    }


def manifest_hash(man):
    keep = {k: v for k, v in man.items() if k not in ("wall_time", "outputs")}
    text = json.dumps(_plain(keep), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:HASH_LEN]


def run_dir(out, man):
    d = Path(out) / manifest_hash(man)
    d.mkdir(parents=True, exist_ok=True)
    return d


def read_manifest(path):
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST
    return json.loads(p.read_text())


# --- domain writers -------------------------------------------------------------

def grid_rows(fld):
    X = fld.nodes()
    T = fld.values.ravel()
    S = fld.status.ravel()
    return ([*x, t, int(s)] for x, t, s in zip(X, T, S))


def grid_header(N):
    return [f"x_{k + 1}" for k in range(N)] + ["T", "status"]


def write_grid(path, fld, meta=None):
    m = {"solver": fld.solver, "shape": list(fld.shape), "lo": fld.lo, "hi": fld.hi}
    m.update(meta or {})
    return write_csv(path, grid_header(fld.N), grid_rows(fld), m)


def write_labels(path, fld, report, meta=None):
    X = fld.nodes()
    L = report.labels.ravel()
    head = [f"x_{k + 1}" for k in range(fld.N)] + ["label"]
    m = {"gamma": report.gamma, "gamma_lip": report.gamma_lip}
    m.update(meta or {})
    return write_csv(path, head, ([*x, int(lab)] for x, lab in zip(X, L)), m)


def write_singular_points(path, points, meta=None):
    if not points:
        return write_csv(path, ["r"], [], meta)
    N = len(points[0].x)
    J = len(points[0].j)
    head = (
        [f"x_{k + 1}" for k in range(N)]
        + ["r"]
        + [f"zeta_{k + 1}" for k in range(N)]
        + [f"j_{m + 1}" for m in range(J)]
        + ["d", "branch"]
    )
    rows = ([*p.x, p.r, *p.zeta, *p.j, p.d, p.branch] for p in points)
    return write_csv(path, head, rows, meta)


def write_table(path, header, array, meta=None):
    return write_csv(path, header, np.asarray(array).tolist(), meta)


def write_long(path, curves, meta=None):
    """Long format: one row per vertex with a curve id and a parameter (time or r)."""
    rows = []
    N = None
    for cid, (param, pts) in enumerate(curves):
        pts = np.asarray(pts, dtype=float)
        N = pts.shape[1]
        for k, p in enumerate(pts):
            rows.append([cid, param, k, *p])
    N = N or 2
    head = ["curve", "param", "vertex"] + [f"x_{k + 1}" for k in range(N)]
    return write_csv(path, head, rows, meta)
