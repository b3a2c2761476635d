"""Mixed-collocation system matrices with penalty zero-flux boundaries.

Layout conventions
------------------
Flux vectors are stored node-major: component ``d`` of the flux at node
``i`` lives at position ``i * dim + d``. Hence

* ``K_a`` is ``(dim*N) x N`` and maps potentials to nodal fluxes,
* ``K_s`` is ``N x (dim*N)`` and takes the divergence of interpolated flux,
* ``K' = -K_s Q^{-1} K_a`` so that the semi-discrete diffusion reads
  ``dV/dt = -K' V`` with ``M = I`` for interpolating trial functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .approximants import ShapeFunctionSet
from .nodes import NodeCloud

DEFAULT_PENALTY = 1e6


def diffusion_tensor(d0, rho, f):
    """Anisotropic tensor ``d0 [(1 - rho) f f^T + rho I]``."""
    f = np.asarray(f, dtype=float)
    if abs(np.linalg.norm(f) - 1.0) > 1e-12:
        raise ValueError("fiber direction must be a unit vector")
    if d0 < 0:
        raise ValueError("d0 must be non-negative")
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    return d0 * ((1.0 - rho) * np.outer(f, f) + rho * np.eye(len(f)))


def nodal_tensors(cloud: NodeCloud, d0, rho):
    """Per-node diffusion tensors, shape ``(N, dim, dim)``.

    ``d0`` is a scalar or a per-node array; zero marks non-conducting
    (scar) tissue.
    """
    n, dim = len(cloud), cloud.dim
    d0 = np.broadcast_to(np.asarray(d0, dtype=float), (n,))
    if np.any(d0 < 0):
        raise ValueError("d0 must be non-negative")
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    f = cloud.fiber[:, :dim]
    fn = np.linalg.norm(f, axis=1)
    if np.any(np.abs(fn - 1.0) > 1e-12):
        raise ValueError("fiber vectors must be unit length in the active dimensions")
    ff = f[:, :, None] * f[:, None, :]
    return d0[:, None, None] * ((1.0 - rho) * ff + rho * np.eye(dim))


def _node_of_entry(shapes: ShapeFunctionSet):
    return np.repeat(np.arange(len(shapes)), shapes.supports.counts)


def assemble_Ka(shapes: ShapeFunctionSet, tensors) -> sp.csr_matrix:
    """Flux operator: row ``(I, d)`` holds ``(D_I grad phi_I^i)_d`` at column i."""
    n, dim = len(shapes), shapes.dim
    owner = _node_of_entry(shapes)
    cols = shapes.supports.indices
    # (nnz, dim): D_owner @ grad
    vals = np.einsum("kde,ke->kd", tensors[owner], shapes.grad)
    rows = owner[:, None] * dim + np.arange(dim)
    ka = sp.coo_matrix(
        (vals.ravel(), (rows.ravel(), np.repeat(cols, dim))), shape=(dim * n, n)
    )
    return ka.tocsr()


def assemble_Ks(shapes: ShapeFunctionSet) -> sp.csr_matrix:
    """Divergence operator: row I holds ``d phi_I^i / d x_d`` at column ``(i, d)``."""
    n, dim = len(shapes), shapes.dim
    owner = _node_of_entry(shapes)
    cols = shapes.supports.indices[:, None] * dim + np.arange(dim)
    ks = sp.coo_matrix(
        (shapes.grad.ravel(), (np.repeat(owner, dim), cols.ravel())),
        shape=(n, dim * n),
    )
    return ks.tocsr()


@dataclass
class PenaltySpec:
    alpha: float
    boundary: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        self.boundary = np.asarray(self.boundary, dtype=bool)
        self.normals = np.asarray(self.normals, dtype=float)
        if self.alpha < 0:
            raise ValueError("penalty alpha must be non-negative")
        nb = np.linalg.norm(self.normals[self.boundary], axis=1)
        bad = np.flatnonzero(np.abs(nb - 1.0) > 1e-12)
        if bad.size:
            node = np.flatnonzero(self.boundary)[bad[0]]
            raise ValueError(f"normal of boundary node {node} is not unit length")

    @classmethod
    def from_cloud(cls, cloud: NodeCloud, alpha=DEFAULT_PENALTY):
        return cls(alpha, cloud.boundary, cloud.normal[:, : cloud.dim])


def penalty_block_inverse(n, alpha):
    """Closed-form ``(I + alpha n n^T)^{-1} = I - alpha/(1+alpha) n n^T``.

    Evaluated as ``((1+alpha) I - alpha n n^T) / (1+alpha)`` so that the
    normal-normal entry keeps full relative precision for large alpha.
    """
    n = np.asarray(n, dtype=float)
    return ((1.0 + alpha) * np.eye(len(n)) - alpha * np.outer(n, n)) / (1.0 + alpha)


def penalty_operator(spec: PenaltySpec, dim) -> sp.csr_matrix:
    """Block-diagonal ``Q^{-1}`` over all nodes (identity at interior nodes)."""
    n = len(spec.boundary)
    blocks = np.broadcast_to(np.eye(dim), (n, dim, dim)).copy()
    b = np.flatnonzero(spec.boundary)
    nv = spec.normals[b]
    a = spec.alpha
    blocks[b] = ((1.0 + a) * np.eye(dim) - a * nv[:, :, None] * nv[:, None, :]) / (1.0 + a)
    return _block_diag(blocks)


def _block_diag(blocks):
    n, dim, _ = blocks.shape
    base = np.arange(n)[:, None, None] * dim
    rows = base + np.arange(dim)[None, :, None]
    cols = base + np.arange(dim)[None, None, :]
    rows, cols = np.broadcast_arrays(rows, cols)
    return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(n * dim, n * dim))


def apply_penalty(Ka, spec: PenaltySpec, dim) -> sp.csr_matrix:
    """Replace the flux rows of boundary nodes by ``Q^{-1} K_a^{bc}``."""
    if len(spec.boundary) * dim != Ka.shape[0]:
        raise ValueError("penalty spec does not match the flux operator size")
    return (penalty_operator(spec, dim) @ Ka).tocsr()


def assemble_Kprime(Ks, Ka_pen, conducting=None) -> sp.csr_matrix:
    """``K' = -K_s K_a`` with the penalized flux rows already in ``K_a``.

    Non-conducting nodes (``conducting == False``) are decoupled: their rows
    are zeroed, and their columns are folded onto the diagonal of each
    coupled row so that constants stay in the null space.
    """
    kp = -(Ks @ Ka_pen)
    kp = kp.tocsr()
    if conducting is not None and not np.all(conducting):
        conducting = np.asarray(conducting, dtype=bool)
        keep = sp.diags(conducting.astype(float))
        dropped = kp @ sp.diags((~conducting).astype(float))
        fold = np.asarray(dropped.sum(axis=1)).ravel()
        kp = keep @ (kp - dropped) + sp.diags(conducting * fold)
        kp = kp.tocsr()
    kp.sum_duplicates()
    kp.sort_indices()
    return kp


@dataclass
class SystemMatrices:
    M: sp.csr_matrix
    Ka: sp.csr_matrix
    Ks: sp.csr_matrix
    Ka_pen: sp.csr_matrix
    K_prime: sp.csr_matrix
    alpha: float


def assemble_system(cloud: NodeCloud, shapes: ShapeFunctionSet, d0, rho, alpha=DEFAULT_PENALTY):
    """Assemble every operator of the semi-discrete diffusion problem."""
    tensors = nodal_tensors(cloud, d0, rho)
    Ka = assemble_Ka(shapes, tensors)
    Ks = assemble_Ks(shapes)
    spec = PenaltySpec.from_cloud(cloud, alpha)
    Ka_pen = apply_penalty(Ka, spec, cloud.dim)
    conducting = np.broadcast_to(np.asarray(d0, float), (len(cloud),)) > 0
    Kp = assemble_Kprime(Ks, Ka_pen, conducting)
    return SystemMatrices(shapes.value_matrix(), Ka, Ks, Ka_pen, Kp, alpha)


def dump_coo(matrix, path):
    """Write a sparse matrix as ``row col value`` lines (zero-based)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with Path(path).open("w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {float(v)!r}\n")
