"""Node clouds: scattered collocation points with boundary data and fibers.

A :class:`NodeCloud` stores coordinates as an ``(N, 3)`` array. Two
dimensional problems keep ``z = 0`` and set ``dim = 2``; every other
per-node vector is stored with three components as well so that the file
format does not depend on the dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

UNIT_TOL = 1e-12


@dataclass
class NodeCloud:
    """Scattered field nodes.

    Attributes
    ----------
    points : ndarray, shape (N, 3)
        Node coordinates in cm.
    boundary : ndarray of bool, shape (N,)
        True for nodes on the domain boundary.
    normal : ndarray, shape (N, 3)
        Outward unit normals. Rows of interior nodes are zero.
    fiber : ndarray, shape (N, 3)
        Unit fiber direction per node.
    region : ndarray of int, shape (N,)
        Integer tissue label.
    h : float
        Characteristic nodal spacing in cm.
    dim : int
        Spatial dimension of the problem (2 or 3).
    lattice_shape : tuple or None
        Nodes per axis when the cloud is a structured lattice in
        lexicographic (x fastest) order; None otherwise.
    """

    points: np.ndarray
    boundary: np.ndarray
    normal: np.ndarray
    fiber: np.ndarray
    region: np.ndarray
    h: float
    dim: int = 3
    lattice_shape: tuple | None = field(default=None)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float)
        n = len(self.points)
        if self.points.shape != (n, 3):
            raise ValueError("points must have shape (N, 3)")
        self.boundary = np.asarray(self.boundary, dtype=bool).reshape(n)
        self.normal = np.asarray(self.normal, dtype=float).reshape(n, 3)
        self.fiber = np.asarray(self.fiber, dtype=float).reshape(n, 3)
        self.region = np.asarray(self.region, dtype=int).reshape(n)
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("node coordinates must be finite")
        if self.h <= 0:
            raise ValueError("spacing h must be positive")

    def __len__(self):
        return len(self.points)

    @property
    def coords(self) -> np.ndarray:
        """Coordinates restricted to the active dimensions, shape (N, dim)."""
        return self.points[:, : self.dim]

    def validate(self):
        """Check the unit-length invariants of normals and fibers."""
        nb = np.linalg.norm(self.normal[self.boundary], axis=1)
        bad = np.flatnonzero(np.abs(nb - 1.0) > UNIT_TOL)
        if bad.size:
            node = np.flatnonzero(self.boundary)[bad[0]]
            raise ValueError(f"boundary normal of node {node} is not unit length")
        nf = np.linalg.norm(self.fiber, axis=1)
        bad = np.flatnonzero(np.abs(nf - 1.0) > UNIT_TOL)
        if bad.size:
            raise ValueError(f"fiber of node {bad[0]} is not unit length")
        if len(self) < self.dim + 2:
            raise ValueError(
                f"need at least {self.dim + 2} nodes for a linear basis, got {len(self)}"
            )

    def set_fiber(self, direction):
        f = np.zeros(3)
        f[: len(direction)] = direction
        f /= np.linalg.norm(f)
        self.fiber = np.tile(f, (len(self), 1))


def _axis_count(length, h, axis):
    ratio = length / h
    count = round(ratio)
    if count < 1 or abs(ratio - count) > 1e-9 * max(1.0, abs(ratio)):
        raise ValueError(
            f"extent along axis {'xyz'[axis]} ({length}) is not divisible by h={h}"
        )
    return count + 1


def generate_regular_grid(extent, h, dim=None, origin=None, fiber=(1.0, 0.0, 0.0)) -> NodeCloud:
    """Regular lattice of nodes covering ``[0, extent]`` along each axis.

    Boundary normals on faces are the axis directions; on edges and corners
    they are the normalized sum of the adjacent face normals.
    """
    extent = [float(e) for e in extent]
    if dim is None:
        dim = len(extent)
    if dim not in (2, 3) or len(extent) != dim:
        raise ValueError("extent must have one entry per dimension (2 or 3)")
    if h <= 0:
        raise ValueError("h must be positive")
    origin = np.zeros(3) if origin is None else np.pad(np.asarray(origin, float), (0, 3 - len(origin)))
    counts = [_axis_count(extent[a], h, a) for a in range(dim)]

    axes = [origin[a] + h * np.arange(counts[a]) for a in range(dim)]
    # x fastest
    mesh = np.meshgrid(*axes, indexing="ij")
    idx = np.meshgrid(*[np.arange(c) for c in counts], indexing="ij")
    pts = np.zeros((int(np.prod(counts)), 3))
    normal = np.zeros_like(pts)
    for a in range(dim):
        pts[:, a] = mesh[a].transpose().ravel()
        ia = idx[a].transpose().ravel()
        normal[ia == 0, a] -= 1.0
        normal[ia == counts[a] - 1, a] += 1.0
    boundary = np.any(normal != 0.0, axis=1)
    normal[boundary] /= np.linalg.norm(normal[boundary], axis=1)[:, None]

    f = np.zeros(3)
    f[: len(fiber)] = fiber
    f /= np.linalg.norm(f)
    return NodeCloud(
        points=pts,
        boundary=boundary,
        normal=normal,
        fiber=np.tile(f, (len(pts), 1)),
        region=np.zeros(len(pts), dtype=int),
        h=float(h),
        dim=dim,
        lattice_shape=tuple(counts),
    )


def detect_lattice(cloud: NodeCloud, tol=1e-9):
    """Return ``(counts, origin, h, order)`` if the cloud is a full lattice.

    ``order`` maps lexicographic lattice index (x fastest) to node index.
    Returns None when the nodes do not form a complete uniform lattice.
    """
    coords = cloud.coords
    counts, origin, spacing = [], [], []
    ijk = np.empty_like(coords, dtype=np.int64)
    for a in range(cloud.dim):
        c = coords[:, a]
        lo, hi = c.min(), c.max()
        span = hi - lo
        if span <= 0:
            return None
        k = np.rint((c - lo) / cloud.h)
        if np.max(np.abs(lo + k * cloud.h - c)) > tol * max(1.0, span):
            return None
        n_a = int(k.max()) + 1
        counts.append(n_a)
        origin.append(lo)
        spacing.append(cloud.h)
        ijk[:, a] = k.astype(np.int64)
    if int(np.prod(counts)) != len(cloud):
        return None
    lin = np.zeros(len(cloud), dtype=np.int64)
    stride = 1
    for a in range(cloud.dim):
        lin += ijk[:, a] * stride
        stride *= counts[a]
    if len(np.unique(lin)) != len(cloud):
        return None
    order = np.empty(len(cloud), dtype=np.int64)
    order[lin] = np.arange(len(cloud))
    return tuple(counts), np.array(origin), cloud.h, order


# --- node-cloud text format -------------------------------------------------
# one node per line: x y z boundary_flag fx fy fz region [extra columns]
# directive comments: "# h <spacing>", "# dim <2|3>", "# columns <names...>"

BASE_COLUMNS = ("x", "y", "z", "boundary", "fx", "fy", "fz", "region")
NORMAL_COLUMNS = ("nx", "ny", "nz")


def write_cloud(cloud: NodeCloud, path, extra=None, extra_name="value", normals=False):
    """Write a cloud in the plain-text node format.

    ``normals=True`` appends ``nx ny nz`` so boundary normals survive a round
    trip; ``extra`` appends one more named column (NaN written as ``nan``).
    """
    names = list(BASE_COLUMNS)
    if normals:
        names += NORMAL_COLUMNS
    if extra is not None:
        names.append(extra_name)
    lines = [f"# columns {' '.join(names)}", f"# h {float(cloud.h)!r}", f"# dim {cloud.dim}"]
    # tolist() yields Python floats, whose repr is the shortest exact form
    pts, fib, nrm = cloud.points.tolist(), cloud.fiber.tolist(), cloud.normal.tolist()
    bnd, reg = cloud.boundary.tolist(), cloud.region.tolist()
    ext = None if extra is None else np.asarray(extra, float).tolist()
    for i in range(len(cloud)):
        x, y, z = pts[i]
        fx, fy, fz = fib[i]
        row = f"{x!r} {y!r} {z!r} {int(bnd[i])} {fx!r} {fy!r} {fz!r} {int(reg[i])}"
        if normals:
            row += " " + " ".join(repr(v) for v in nrm[i])
        if ext is not None:
            row += f" {ext[i]!r}"
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_cloud_file(path):
    rows, meta = [], {}
    with Path(path).open() as fh:
        for line in fh:
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                parts = s[1:].split()
                if len(parts) >= 2 and parts[0] in ("h", "dim", "columns"):
                    meta[parts[0]] = parts[1:]
                continue
            rows.append(s.split())
    if not rows:
        raise ValueError(f"{path}: no nodes")
    width = {len(r) for r in rows}
    if len(width) != 1 or min(width) < len(BASE_COLUMNS):
        raise ValueError(f"{path}: expected at least 8 columns on every node line")
    names = meta.get("columns", list(BASE_COLUMNS))
    if len(names) != width.pop():
        names = list(BASE_COLUMNS) + [f"col{i}" for i in range(len(rows[0]) - 8)]
    data = np.array([[float(v) for v in r] for r in rows])
    return data, names, meta


def read_cloud(path, h=None) -> NodeCloud:
    """Read a node-cloud file.

    Normals come from ``nx ny nz`` columns when present; otherwise a box
    lattice gets axis-aligned normals and any other cloud gets normals from
    :func:`estimate_normals`.
    """
    data, names, meta = _parse_cloud_file(path)
    col = {n: i for i, n in enumerate(names)}
    pts = data[:, [col["x"], col["y"], col["z"]]]
    dim = int(meta["dim"][0]) if "dim" in meta else (2 if np.all(pts[:, 2] == 0) else 3)
    if h is None:
        h = float(meta["h"][0]) if "h" in meta else _median_spacing(pts)
    boundary = data[:, col["boundary"]] != 0
    fiber = data[:, [col["fx"], col["fy"], col["fz"]]]
    norms = np.linalg.norm(fiber, axis=1)
    if np.any(norms == 0):
        raise ValueError(f"{path}: zero fiber vector")
    fiber = fiber / norms[:, None]
    cloud = NodeCloud(
        points=pts,
        boundary=boundary,
        normal=np.zeros_like(pts),
        fiber=fiber,
        region=data[:, col["region"]].astype(int),
        h=h,
        dim=dim,
    )
    lat = detect_lattice(cloud)
    if lat is not None:
        cloud.lattice_shape = lat[0]
    if all(n in col for n in NORMAL_COLUMNS):
        normal = data[:, [col[n] for n in NORMAL_COLUMNS]]
        normal[~boundary] = 0.0
        nn = np.linalg.norm(normal[boundary], axis=1)
        if np.any(nn == 0):
            raise ValueError(f"{path}: boundary node without normal")
        # leave already-unit normals untouched so files round-trip exactly
        off = np.abs(nn - 1.0) > UNIT_TOL
        bidx = np.flatnonzero(boundary)[off]
        normal[bidx] /= nn[off][:, None]
        cloud.normal = normal
    elif lat is not None:
        box = generate_regular_grid(
            [(c - 1) * cloud.h for c in lat[0]], cloud.h, dim=dim, origin=lat[1]
        )
        inv = np.argsort(lat[3])
        cloud.boundary = box.boundary[inv]
        cloud.normal = box.normal[inv]
    else:
        cloud.normal = estimate_normals(cloud)
    return cloud


def read_cloud_column(path, name):
    """Return one named numeric column of a node-cloud file."""
    data, names, _ = _parse_cloud_file(path)
    if name not in names:
        raise KeyError(f"{path}: no column {name!r}")
    return data[:, names.index(name)]


def _median_spacing(pts):
    from scipy.spatial import cKDTree

    d, _ = cKDTree(pts).query(pts, k=2)
    return float(np.median(d[:, 1]))


def estimate_normals(cloud: NodeCloud, k=None) -> np.ndarray:
    """Outward normals for flagged boundary nodes of an arbitrary cloud.

    Uses the direction from the local neighborhood centroid to the node,
    which points outward for convex-ish boundary patches.
    """
    from scipy.spatial import cKDTree

    normal = np.zeros_like(cloud.points)
    bidx = np.flatnonzero(cloud.boundary)
    if bidx.size == 0:
        return normal
    coords = cloud.coords
    k = min(len(cloud), k or (3 ** cloud.dim) * 2)
    _, nb = cKDTree(coords).query(coords[bidx], k=k)
    v = coords[bidx] - coords[nb].mean(axis=1)
    nv = np.linalg.norm(v, axis=1)
    nv[nv == 0] = 1.0
    normal[bidx, : cloud.dim] = v / nv[:, None]
    zero = np.linalg.norm(normal[bidx], axis=1) == 0
    normal[bidx[zero], 0] = 1.0
    return normal


def mean_perimeter_spacing(vertices, triangles) -> float:
    """Twice the mean triangle perimeter of a surface mesh.

    Helper for choosing an immersed-grid spacing from a surface mesh.
    """
    v = np.asarray(vertices, float)
    t = np.asarray(triangles, int)
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    per = (
        np.linalg.norm(b - a, axis=1)
        + np.linalg.norm(c - b, axis=1)
        + np.linalg.norm(a - c, axis=1)
    )
    return 2.0 * float(per.mean())


def jitter(cloud: NodeCloud, fraction, seed=0) -> NodeCloud:
    """Copy of ``cloud`` with interior nodes shifted by up to ``fraction*h``.

    Boundary nodes stay fixed so that the domain and its normals are kept.
    """
    rng = np.random.default_rng(seed)
    pts = cloud.points.copy()
    inner = ~cloud.boundary
    shift = rng.uniform(-fraction, fraction, size=(int(inner.sum()), cloud.dim)) * cloud.h
    pts[inner, : cloud.dim] += shift
    return NodeCloud(
        points=pts,
        boundary=cloud.boundary.copy(),
        normal=cloud.normal.copy(),
        fiber=cloud.fiber.copy(),
        region=cloud.region.copy(),
        h=cloud.h,
        dim=cloud.dim,
    )


def lattice_size(extent, h):
    """Closed-form node count of :func:`generate_regular_grid`."""
    return math.prod(round(e / h) + 1 for e in extent)
