"""Run-directory files: probe traces, LAT maps and potential snapshots.

Every number is written with ``repr`` so a file is a byte-exact function
of the computed doubles. A run directory holds::

    traces.csv              t,probe0,probe1,...
    lat.txt                 node-cloud text format plus a ``lat`` column
    snapshot_<step>.vtk     legacy ASCII VTK, one VERTEX cell per node
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .metrics import LATMap
from .nodes import NodeCloud, read_cloud, read_cloud_column, write_cloud

TRACES = "traces.csv"
LAT = "lat.txt"
SNAPSHOT = "snapshot_{:07d}.vtk"
_SNAP_RE = re.compile(r"snapshot_(\d+)\.vtk$")


def write_traces(path, times, traces):
    traces = np.asarray(traces, float).reshape(len(times), -1)
    header = ",".join(["t"] + [f"probe{i}" for i in range(traces.shape[1])])
    lines = [header]
    for t, row in zip(times, traces):
        lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_traces(path):
    """Return ``(times, traces)`` with ``traces`` shaped ``(T, P)``."""
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("t"):
        raise ValueError(f"{path}: missing trace header")
    ncol = len(text[0].split(","))
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:] if line], dtype=float)
    data = data.reshape(-1, ncol)
    return data[:, 0], data[:, 1:]


def write_lat(path, cloud: NodeCloud, lat: LATMap):
    write_cloud(cloud, path, extra=lat.times, extra_name="lat", normals=True)


def read_lat(path):
    """Return ``(cloud, lat_times)``; never-activated nodes are NaN."""
    return read_cloud(path), read_cloud_column(path, "lat")


def write_vtk(path, points, values, name="V", title="mcmcardio snapshot"):
    points = np.asarray(points, float)
    values = np.asarray(values, float)
    n = len(points)
    out = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    out += [f"{x!r} {y!r} {z!r}" for x, y, z in points.tolist()]
    out.append(f"CELLS {n} {2 * n}")
    out += [f"1 {i}" for i in range(n)]
    out.append(f"CELL_TYPES {n}")
    out += ["1"] * n
    out += [f"POINT_DATA {n}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    out += [repr(v) for v in values.tolist()]
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk(path):
    """Return ``(points, values)`` from a file written by :func:`write_vtk`."""
    lines = Path(path).read_text().splitlines()
    try:
        k = next(i for i, s in enumerate(lines) if s.startswith("POINTS"))
        n = int(lines[k].split()[1])
        pts = np.array([[float(v) for v in s.split()] for s in lines[k + 1 : k + 1 + n]])
        j = next(i for i, s in enumerate(lines) if s.startswith("LOOKUP_TABLE"))
        vals = np.array([float(s) for s in lines[j + 1 : j + 1 + n]])
    except (StopIteration, ValueError, IndexError):
        raise ValueError(f"{path}: not a point-data VTK file") from None
    if len(vals) != n:
        raise ValueError(f"{path}: expected {n} point values")
    return pts.reshape(n, 3), vals


def write_run(result, directory, dt):
    """Write traces, LAT and all snapshots of a run; returns the file list."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for old in d.glob("snapshot_*.vtk"):
        old.unlink()
    files = [d / TRACES, d / LAT]
    write_traces(files[0], result.times, result.traces)
    write_lat(files[1], result.cloud, result.lat)
    for t, V in result.snapshots:
        step = int(round(t / dt))
        p = d / SNAPSHOT.format(step)
        write_vtk(p, result.cloud.points, V, title=f"mcmcardio snapshot t={t!r} ms")
        files.append(p)
    return files


def final_snapshot(directory):
    """Path of the snapshot with the largest step number."""
    snaps = []
    for p in Path(directory).glob("snapshot_*.vtk"):
        m = _SNAP_RE.search(p.name)
        if m:
            snaps.append((int(m.group(1)), p))
    if not snaps:
        raise FileNotFoundError(f"{directory}: no snapshot files")
    return max(snaps)[1]
