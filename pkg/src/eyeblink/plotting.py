"""Figures for a finished run, written next to the CSV output.

Uses the object-oriented matplotlib API with the Agg canvas so rendering
never touches global pyplot state.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .geometry import lid_lambda

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
}


def new_figure(width=5.0, height=None, nrows=1, ncols=1, **kw):
    """Figure and axes sized by the golden ratio unless ``height`` is given."""
    import matplotlib as mpl

    if height is None:
        height = width * (np.sqrt(5.0) - 1.0) / 2.0
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(width, height))
        FigureCanvasAgg(fig)
        axes = fig.subplots(nrows, ncols, squeeze=False, **kw)
    return fig, axes


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    return path


def plot_snapshots(result, path):
    times = sorted(result.states)
    if not times:
        return None
    fields = [result.states[t] for t in times]
    vmin = min(H.min() for _, _, H in fields)
    vmax = max(H.max() for _, _, H in fields)
    fig, axes = new_figure(width=2.2 * len(times), height=2.0, ncols=len(times))
    mesh = None
    for ax, t, (x, y, H) in zip(axes[0], times, fields):
        mesh = ax.pcolormesh(x, y, H, shading="gouraud", vmin=vmin, vmax=vmax, cmap="viridis")
        ax.set_aspect("equal")
        ax.set_xlim(-1, 1)
        ax.set_ylim(-0.6, 0.6)
        ax.set_title(f"t = {t:g}")
        ax.set_xticks([])
        ax.set_yticks([])
    fig.colorbar(mesh, ax=list(axes[0]), shrink=0.8)
    fig.savefig(path, dpi=150)
    return path


def plot_mass(result, path):
    fig, axes = new_figure()
    ax = axes[0, 0]
    ax.plot(result.mass.times, result.mass.relative_change, lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("(M(t) - M(0)) / M(0)")
    ax.ticklabel_format(axis="y", style="sci", scilimits=(0, 0))
    return _save(fig, path)


def plot_error(result, path):
    fig, axes = new_figure()
    ax = axes[0, 0]
    t = np.asarray(result.times)
    err = np.asarray(result.relerr)
    keep = err > 0
    ax.semilogy(t[keep], err[keep], lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("relative L2 error")
    return _save(fig, path)


def plot_lid(result, path):
    fig, axes = new_figure()
    ax = axes[0, 0]
    vals = np.asarray(result.lid)
    ax.plot(result.times, vals[:, 0], label="upper lid centre", lw=1)
    ax.plot(result.times, vals[:, 1], label="lower lid centre", lw=1, ls="--")
    ax.set_xlabel("t")
    ax.set_ylabel("h")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_lid_motion(lid, path, periods=1.5):
    fig, axes = new_figure()
    ax = axes[0, 0]
    t = np.linspace(0.0, periods / lid.nu, 600)
    ax.plot(t, lid_lambda(lid, t), lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("lid position")
    return _save(fig, path)


def render_figures(result, out) -> list:
    """Render every figure that applies to ``result`` into ``out/figures``."""
    figdir = Path(out) / "figures"
    figdir.mkdir(parents=True, exist_ok=True)
    written = [
        plot_snapshots(result, figdir / "snapshots.png"),
        plot_mass(result, figdir / "mass.png"),
        plot_lid_motion(result.model.lid, figdir / "lidmotion.png"),
    ]
    if result.relerr:
        written.append(plot_error(result, figdir / "error.png"))
    if result.config.experiment == "film" and result.lid:
        written.append(plot_lid(result, figdir / "lid.png"))
    return [p for p in written if p is not None]
