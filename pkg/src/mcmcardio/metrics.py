"""Comparison metrics between solutions and local activation times."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def nrms(v_a, v_b) -> float:
    """Root-mean-square of ``v_a - v_b`` normalized by the range of ``v_b``."""
    a = np.asarray(v_a, dtype=float).ravel()
    b = np.asarray(v_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("NRMS needs at least two values")
    span = b.max() - b.min()
    if span == 0:
        raise ValueError("reference field is constant; NRMS is undefined")
    return float(np.sqrt(np.mean((a - b) ** 2)) / span)


def tpd(trace_a, trace_b):
    """Mean absolute potential difference over time samples.

    Traces of shape ``(T,)`` give a scalar; ``(T, P)`` gives one value per
    probe column.
    """
    a = np.asarray(trace_a, dtype=float)
    b = np.asarray(trace_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"trace shapes differ: {a.shape} vs {b.shape}")
    if a.shape[0] == 0:
        raise ValueError("empty traces")
    out = np.mean(np.abs(a - b), axis=0)
    return float(out) if out.ndim == 0 else out


@dataclass
class LATMap:
    """First upward threshold crossing per node (NaN: never activated)."""

    times: np.ndarray
    threshold: float

    @property
    def activated(self):
        return np.isfinite(self.times)

    def mean(self, mask=None):
        t = self.times if mask is None else self.times[mask]
        t = t[np.isfinite(t)]
        return float(t.mean()) if t.size else float("nan")


class LATTracker:
    """Streaming first-crossing detector; no potential history is stored."""

    def __init__(self, v0, threshold, t0=0.0):
        self.threshold = float(threshold)
        self.prev = np.array(v0, dtype=float)
        self.t_prev = float(t0)
        self.times = np.full(len(self.prev), np.nan)

    def update(self, v, t):
        v = np.asarray(v, dtype=float)
        thr = self.threshold
        cross = (self.prev < thr) & (v >= thr) & np.isnan(self.times)
        if cross.any():
            p, c = self.prev[cross], v[cross]
            frac = (thr - p) / (c - p)
            self.times[cross] = self.t_prev + frac * (t - self.t_prev)
        self.prev = v.copy()
        self.t_prev = float(t)

    def result(self) -> LATMap:
        return LATMap(self.times.copy(), self.threshold)


def compute_lat(history, times, threshold) -> LATMap:
    """LAT map from a stored ``(T, N)`` potential history."""
    history = np.asarray(history, dtype=float)
    times = np.asarray(times, dtype=float)
    tr = LATTracker(history[0], threshold, times[0])
    for v, t in zip(history[1:], times[1:]):
        tr.update(v, t)
    return tr.result()


def contour_axis_ratio(points, lat, center, level_lo, level_hi, axis_a=0, axis_b=1, band=None):
    """Ratio of LAT contour growth along two axes through ``center``.

    Along each axis the nodes on the axis line (within ``band``) are used
    to interpolate where LAT equals ``level_lo`` and ``level_hi``; the
    ratio of the distances travelled between the two levels is returned.
    Using two levels removes the offset caused by the finite stimulus
    region.
    """
    points = np.asarray(points, float)
    center = np.asarray(center, float)
    band = band if band is not None else 1e-9

    def radius(axis, level):
        others = [d for d in range(points.shape[1]) if d != axis]
        on = np.all(np.abs(points[:, others] - center[others]) <= band, axis=1)
        on &= points[:, axis] >= center[axis]
        r = points[on, axis] - center[axis]
        t = lat[on]
        order = np.argsort(r)
        r, t = r[order], t[order]
        ok = np.isfinite(t)
        r, t = r[ok], t[ok]
        k = np.flatnonzero((t[:-1] <= level) & (t[1:] > level))
        if k.size == 0:
            raise ValueError(f"level {level} ms not reached along axis {axis}")
        k = k[0]
        return r[k] + (level - t[k]) / (t[k + 1] - t[k]) * (r[k + 1] - r[k])

    ga = radius(axis_a, level_hi) - radius(axis_a, level_lo)
    gb = radius(axis_b, level_hi) - radius(axis_b, level_lo)
    return float(ga / gb)
