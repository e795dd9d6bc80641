"""Figures rendered from the CSV files of a run directory.

Only the files on disk are read, so a report can be regenerated long after
the run without recomputing anything.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import read_csv  # noqa: E402

LABEL_STYLE = {1: ("tab:red", "non-Lipschitz"), 2: ("0.6", "inconclusive")}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def _grid(path):
    meta, head, rows = read_csv(path)
    shape = tuple(int(float(s)) for s in meta["shape"].split())
    return head, rows, shape


def plot_grid(grid_csv, out, labels_csv=None):
    """Filled contours of T on a planar grid, with probe labels on top."""
    head, rows, shape = _grid(grid_csv)
    if len(shape) != 2:
        return None
    X = rows[:, 0].reshape(shape)
    Y = rows[:, 1].reshape(shape)
    T = rows[:, 2].reshape(shape)
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    cs = ax.contourf(X, Y, T, levels=24, cmap="viridis")
    ax.contour(X, Y, T, levels=12, colors="k", linewidths=0.4)
    fig.colorbar(cs, ax=ax, label="T")
    if labels_csv is not None:
        _, _, lab = read_csv(labels_csv)
        for k, (color, name) in LABEL_STYLE.items():
            sel = lab[:, -1] == k
            if sel.any():
                ax.plot(lab[sel, 0], lab[sel, 1], ".", ms=2.5, color=color, label=name)
        ax.legend(loc="upper right", fontsize=8, markerscale=3)
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    ax.set_aspect("equal")
    return _save(fig, out)


def plot_points(csv, out):
    """Scatter of the first two or three state coordinates of a point file."""
    _, head, rows = read_csv(csv)
    cols = [i for i, h in enumerate(head) if h.startswith("x_")]
    if len(rows) == 0 or len(cols) < 2:
        return None
    fig = plt.figure(figsize=(5, 4.5))
    if len(cols) >= 3:
        ax = fig.add_subplot(projection="3d")
        ax.scatter(rows[:, cols[0]], rows[:, cols[1]], rows[:, cols[2]], s=1, c=rows[:, cols[2]])
        ax.set_zlabel("$x_3$")
    else:
        ax = fig.add_subplot()
        ax.plot(rows[:, cols[0]], rows[:, cols[1]], ".", ms=1.5)
        ax.set_aspect("equal")
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    return _save(fig, out)


def plot_curves(csv, out, closed=False):
    """Long-format curves (curve, param, vertex, x_1, x_2) as lines."""
    _, head, rows = read_csv(csv)
    if len(rows) == 0:
        return None
    fig, ax = plt.subplots(figsize=(5, 4.5))
    for cid in np.unique(rows[:, 0]):
        sel = rows[:, 0] == cid
        P = rows[sel][:, 3:5]
        if closed:
            P = np.vstack([P, P[:1]])
        ax.plot(P[:, 0], P[:, 1], lw=1.0, label=f"{rows[sel][0, 1]:.3g}")
    ax.plot([0.0], [0.0], "k+")
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    ax.set_aspect("equal")
    ax.legend(fontsize=7, title="r" if closed else "arc")
    return _save(fig, out)


def plot_trajectory(csv, out):
    _, head, rows = read_csv(csv)
    t = rows[:, 0]
    xs = [i for i, h in enumerate(head) if h.startswith("x_")]
    us = [i for i, h in enumerate(head) if h.startswith("u_")]
    fig, (a, b) = plt.subplots(2, 1, figsize=(5.5, 4.5), sharex=True)
    for i in xs:
        a.plot(t, rows[:, i], label=head[i])
    for i in us:
        b.step(t, rows[:, i], where="post", label=head[i])
    a.legend(fontsize=8)
    b.legend(fontsize=8)
    b.set_xlabel("t")
    return _save(fig, out)


def render(run_dir):
    """All figures that the files in run_dir support; returns the written paths."""
    d = Path(run_dir)
    out = []
    if (d / "grid.csv").exists():
        lab = d / "labels.csv"
        out.append(plot_grid(d / "grid.csv", d / "grid.png", lab if lab.exists() else None))
    for name in ("singular", "strata"):
        if (d / f"{name}.csv").exists():
            out.append(plot_points(d / f"{name}.csv", d / f"{name}.png"))
    if (d / "trajectory.csv").exists():
        out.append(plot_trajectory(d / "trajectory.csv", d / "trajectory.png"))
    if (d / "arcs_long.csv").exists():
        out.append(plot_curves(d / "arcs_long.csv", d / "arcs.png"))
    if (d / "fronts.csv").exists():
        out.append(plot_curves(d / "fronts.csv", d / "fronts.png", closed=True))
    return [p for p in out if p is not None]
