"""Figures for run reports (non-interactive Agg backend, PNG files)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "figure.dpi": 100,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
}
# fixed metadata keeps PNG bytes independent of the build date
_META = {"Software": "mcmcardio", "Creation Time": None}


def _save(fig, path):
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def plot_traces(path, times, traces, labels=None, title="probe traces"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        traces = np.asarray(traces).reshape(len(times), -1)
        for j in range(traces.shape[1]):
            ax.plot(times, traces[:, j], label=labels[j] if labels else f"probe{j}")
        ax.set_xlabel("t [ms]")
        ax.set_ylabel("V")
        ax.set_title(title)
        if traces.shape[1]:
            ax.legend(loc="best")
        fig.tight_layout()
        return _save(fig, path)


def plot_lat(path, points, lat, title="local activation time"):
    """Scatter map of LAT over the x-y plane (3D clouds are projected)."""
    points = np.asarray(points)
    lat = np.asarray(lat, float)
    ok = np.isfinite(lat)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.scatter(points[~ok, 0], points[~ok, 1], s=4, c="0.8", marker="s", lw=0)
        if ok.any():
            sc = ax.scatter(points[ok, 0], points[ok, 1], s=6, c=lat[ok], cmap="viridis", marker="s", lw=0)
            fig.colorbar(sc, ax=ax, label="LAT [ms]")
        ax.set_aspect("equal")
        ax.set_xlabel("x [cm]")
        ax.set_ylabel("y [cm]")
        ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def plot_compare(path, times, traces_a, traces_b, label_a="A", label_b="B"):
    """Overlay probe traces of two runs, one panel per probe (max 4)."""
    traces_a = np.asarray(traces_a).reshape(len(times), -1)
    traces_b = np.asarray(traces_b).reshape(len(times), -1)
    n = max(1, min(4, traces_a.shape[1]))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(n, 1, sharex=True, squeeze=False, figsize=(6.0, 1.6 + 1.4 * n))
        for j in range(min(n, traces_a.shape[1])):
            ax = axes[j, 0]
            ax.plot(times, traces_a[:, j], label=label_a)
            ax.plot(times, traces_b[:, j], "--", label=label_b)
            ax.set_ylabel(f"V probe{j}")
        axes[0, 0].legend(loc="best")
        axes[-1, 0].set_xlabel("t [ms]")
        fig.tight_layout()
        return _save(fig, path)
