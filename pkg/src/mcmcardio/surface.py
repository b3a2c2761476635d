"""Closed triangle surfaces, point containment and immersed-grid clouds."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nodes import NodeCloud

# retries with rotated rays before giving up on a degenerate configuration
MAX_RAY_RETRIES = 16


@dataclass
class SurfaceMesh:
    """Closed, consistently wound triangle surface.

    On construction the mesh is checked for closure (every edge shared by
    exactly two triangles) and consistent winding. Winding is flipped when
    the enclosed signed volume is negative so that face normals point out.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) == 0:
            raise ValueError("surface mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise ValueError("triangle references a missing vertex")
        _check_closed(self.triangles)
        if self.signed_volume() < 0:
            self.triangles = self.triangles[:, ::-1].copy()
        v = self.vertices[self.triangles]
        self._a = v[:, 0]
        self._b = v[:, 1]
        self._c = v[:, 2]
        self.scale = float(np.ptp(self.vertices, axis=0).max())

    def signed_volume(self) -> float:
        v = self.vertices[self.triangles]
        return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)

    @property
    def face_normals(self) -> np.ndarray:
        """Outward unit normal of every triangle."""
        n = np.cross(self._b - self._a, self._c - self._a)
        return n / np.linalg.norm(n, axis=1)[:, None]

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted average of incident face normals, normalized."""
        # the raw cross product is already area weighted (twice the area)
        n = np.cross(self._b - self._a, self._c - self._a)
        acc = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(acc, self.triangles[:, k], n)
        norm = np.linalg.norm(acc, axis=1)
        if np.any(norm == 0):
            raise ValueError("vertex with vanishing normal (unreferenced or degenerate)")
        return acc / norm[:, None]

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def contains(self, p) -> bool:
        return bool(self.contains_many(np.asarray(p, float).reshape(1, 3))[0])

    def contains_many(self, points) -> np.ndarray:
        """Vectorized :func:`contains` for an ``(M, 3)`` array of points."""
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        lo, hi = self.bounds()
        tol = 1e-9 * self.scale
        inside = np.zeros(len(points), dtype=bool)
        todo = np.flatnonzero(np.all((points >= lo - tol) & (points <= hi + tol), axis=1))
        for attempt in range(MAX_RAY_RETRIES):
            if todo.size == 0:
                break
            frame = _ray_frame(attempt)
            res = self._parity(points[todo], frame)
            settled = res >= 0
            inside[todo[settled]] = res[settled] == 1
            todo = todo[~settled]
        if todo.size:
            raise RuntimeError(
                f"containment undecided for point {points[todo[0]]} after "
                f"{MAX_RAY_RETRIES} ray directions"
            )
        return inside

    def _parity(self, pts, frame):
        """Ray parity along ``frame[0]``.

        Returns 1 (inside), 0 (outside) or -1 (degenerate hit: retry).
        Points lying on the surface are reported outside.
        """
        a = self._a @ frame.T
        b = self._b @ frame.T
        c = self._c @ frame.T
        q = pts @ frame.T
        tol = 1e-10 * self.scale
        area = (b[:, 1] - a[:, 1]) * (c[:, 2] - a[:, 2]) - (b[:, 2] - a[:, 2]) * (c[:, 1] - a[:, 1])
        live = np.abs(area) > tol * self.scale
        a, b, c, area = a[live], b[live], c[live], area[live]
        out = np.empty(len(pts), dtype=np.int64)
        chunk = max(1, 2_000_000 // max(1, len(a)))
        for s in range(0, len(pts), chunk):
            qq = q[s : s + chunk, None, :]
            # signed sub-areas of the projected triangle (barycentric numerators)
            w0 = (b[:, 1] - qq[..., 1]) * (c[:, 2] - qq[..., 2]) - (b[:, 2] - qq[..., 2]) * (c[:, 1] - qq[..., 1])
            w1 = (c[:, 1] - qq[..., 1]) * (a[:, 2] - qq[..., 2]) - (c[:, 2] - qq[..., 2]) * (a[:, 1] - qq[..., 1])
            w2 = area - w0 - w1
            sgn = np.sign(area)
            w0, w1, w2 = w0 * sgn, w1 * sgn, w2 * sgn
            edge_tol = tol * self.scale
            wmin = np.minimum(np.minimum(w0, w1), w2)
            hit = wmin > edge_tol
            near = (wmin >= -edge_tol) & ~hit
            absa = np.abs(area)
            depth = (w0 * a[:, 0] + w1 * b[:, 0] + w2 * c[:, 0]) / absa - qq[..., 0]
            on_surface = np.any((hit | near) & (np.abs(depth) <= tol), axis=1)
            degenerate = np.any(near & (depth > tol), axis=1)
            count = np.sum(hit & (depth > tol), axis=1)
            res = (count % 2).astype(np.int64)
            res[degenerate] = -1
            res[on_surface] = 0
            out[s : s + chunk] = res
        return out

    def distance(self, points) -> np.ndarray:
        """Unsigned Euclidean distance from each point to the surface."""
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        a, b, c = self._a, self._b, self._c
        n = np.cross(b - a, c - a)
        n2 = np.einsum("ij,ij->i", n, n)
        out = np.empty(len(points))
        chunk = max(1, 1_000_000 // len(a))
        for s in range(0, len(points), chunk):
            p = points[s : s + chunk, None, :]
            ap = p - a
            # projection onto the plane and its barycentric test
            t = np.einsum("mtj,tj->mt", ap, n) / n2
            proj = p - t[..., None] * n
            inside = (
                (np.einsum("mtj,tj->mt", np.cross(b - a, proj - a), n) >= 0)
                & (np.einsum("mtj,tj->mt", np.cross(c - b, proj - b), n) >= 0)
                & (np.einsum("mtj,tj->mt", np.cross(a - c, proj - c), n) >= 0)
            )
            d = np.where(inside, np.abs(t) * np.sqrt(n2), np.inf)
            for u, v in ((a, b), (b, c), (c, a)):
                d = np.minimum(d, _segment_distance(p, u, v))
            out[s : s + chunk] = d.min(axis=1)
        return out


def _segment_distance(p, u, v):
    e = v - u
    ee = np.einsum("ij,ij->i", e, e)
    s = np.clip(np.einsum("mtj,tj->mt", p - u, e) / ee, 0.0, 1.0)
    closest = u + s[..., None] * e
    return np.linalg.norm(p - closest, axis=-1)


def _ray_frame(attempt):
    """Orthonormal frame whose first row is the ray direction.

    Attempt 0 casts along +x; later attempts use fixed pseudo-random
    rotations so retries are reproducible.
    """
    if attempt == 0:
        return np.eye(3)
    rng = np.random.default_rng(1000 + attempt)
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    return q.T


def _check_closed(triangles):
    edges = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    und = np.sort(edges, axis=1)
    _, counts = np.unique(und, axis=0, return_counts=True)
    if np.any(counts != 2):
        raise ValueError(
            f"surface is not closed: {int(np.sum(counts != 2))} edges not shared by exactly two triangles"
        )
    _, dcounts = np.unique(edges, axis=0, return_counts=True)
    if np.any(dcounts != 1):
        raise ValueError("surface winding is inconsistent")


def contains(mesh: SurfaceMesh, p) -> bool:
    """True iff ``p`` lies strictly inside the closed surface."""
    return mesh.contains(p)


def immerse_grid(mesh: SurfaceMesh, spacing, fiber=(1.0, 0.0, 0.0), cull=0.5):
    """Immersed-grid node cloud: interior lattice nodes plus surface vertices.

    Lattice nodes are placed over the bounding box starting at its minimum
    corner. Nodes outside the surface and nodes closer than ``cull*spacing``
    to it are dropped. Surface vertices become boundary nodes carrying
    area-weighted vertex normals.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    lo, hi = mesh.bounds()
    counts = np.floor((hi - lo) / spacing + 1e-9).astype(int) + 1
    axes = [lo[a] + spacing * np.arange(counts[a]) for a in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).transpose(2, 1, 0, 3).reshape(-1, 3)
    keep = mesh.contains_many(grid)
    lattice = grid[keep]
    if len(lattice):
        lattice = lattice[mesh.distance(lattice) >= cull * spacing]
    if len(lattice) == 0:
        raise ValueError(
            f"no interior lattice nodes at spacing {spacing}; spacing is too large for the object"
        )
    verts = mesh.vertices
    pts = np.vstack([lattice, verts])
    n_in = len(lattice)
    boundary = np.zeros(len(pts), dtype=bool)
    boundary[n_in:] = True
    normal = np.zeros_like(pts)
    normal[n_in:] = mesh.vertex_normals()
    f = np.asarray(fiber, float)
    f = f / np.linalg.norm(f)
    return NodeCloud(
        points=pts,
        boundary=boundary,
        normal=normal,
        fiber=np.tile(f, (len(pts), 1)),
        region=np.zeros(len(pts), dtype=int),
        h=float(spacing),
        dim=3,
    )


# --- surface file format ----------------------------------------------------
# OFF variant:
#   OFF
#   <ntriangles> <nvertices>
#   x y z                  (nvertices lines)
#   3 i j k                (ntriangles lines, zero-based; leading 3 optional)


def write_off(mesh: SurfaceMesh, path):
    lines = ["OFF", f"{len(mesh.triangles)} {len(mesh.vertices)}"]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_off(path) -> SurfaceMesh:
    tokens = []
    with Path(path).open() as fh:
        for line in fh:
            s = line.split("#", 1)[0].strip()
            if s:
                tokens.append(s.split())
    if not tokens or tokens[0] != ["OFF"]:
        raise ValueError(f"{path}: missing OFF header")
    if len(tokens) < 2 or len(tokens[1]) != 2:
        raise ValueError(f"{path}: expected '<ntriangles> <nvertices>' on line 2")
    nt, nv = int(tokens[1][0]), int(tokens[1][1])
    body = tokens[2:]
    if len(body) != nv + nt:
        raise ValueError(f"{path}: expected {nv} vertex and {nt} triangle lines")
    verts = np.array([[float(v) for v in row] for row in body[:nv]])
    tris = []
    for row in body[nv:]:
        if len(row) == 4 and row[0] == "3":
            row = row[1:]
        if len(row) != 3:
            raise ValueError(f"{path}: triangle lines need three indices")
        tris.append([int(v) for v in row])
    return SurfaceMesh(verts, np.array(tris))


# --- stock surfaces -----------------------------------------------------------


def box_mesh(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)) -> SurfaceMesh:
    """Axis-aligned box as 8 vertices and 12 outward-wound triangles."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    v = np.array(
        [[(hi if (k >> a) & 1 else lo)[a] for a in range(3)] for k in range(8)]
    )
    t = [
        (0, 2, 1), (1, 2, 3),  # z = lo
        (4, 5, 6), (5, 7, 6),  # z = hi
        (0, 1, 4), (1, 5, 4),  # y = lo
        (2, 6, 3), (3, 6, 7),  # y = hi
        (0, 4, 2), (2, 4, 6),  # x = lo
        (1, 3, 5), (3, 7, 5),  # x = hi
    ]
    return SurfaceMesh(v, np.array(t))


def icosphere(subdivisions=2, radius=1.0, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Geodesic sphere; ``subdivisions=2`` gives 320 faces."""
    g = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        (-1, g, 0), (1, g, 0), (-1, -g, 0), (1, -g, 0),
        (0, -1, g), (0, 1, g), (0, -1, -g), (0, 1, -g),
        (g, 0, -1), (g, 0, 1), (-g, 0, -1), (-g, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for i, j, k in faces:
            a, b, c = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            new += [(i, a, c), (j, b, a), (k, c, b), (a, b, c)]
        faces = new
    v = np.array(verts) * radius + np.asarray(center, float)
    return SurfaceMesh(v, np.array(faces))
