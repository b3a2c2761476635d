"""Structured-grid finite element reference for the diffusion operator.

Bilinear quadrilaterals (2D) or trilinear hexahedra (3D) on a uniform
lattice, 2-point Gauss quadrature per axis, lumped (row-sum) mass. Only
full box lattices are accepted; this solver exists to cross-check the
meshfree operator, not to handle general geometry.
"""

from __future__ import annotations

import itertools

import numpy as np
import scipy.sparse as sp

from .assembly import nodal_tensors
from .nodes import NodeCloud, detect_lattice


class NotStructuredError(ValueError):
    pass


def _reference_gradients(dim, h):
    """Shape-function gradients at Gauss points of the ``[0, h]^dim`` cell.

    Returns ``(grads, weight)`` with ``grads`` of shape
    ``(ngauss, nen, dim)``; local node ``a`` has corner offsets given by
    the bits of ``a`` (x fastest).
    """
    g = 0.5 * (1.0 + np.array([-1.0, 1.0]) / np.sqrt(3.0))  # on [0, 1]
    corners = np.array(list(itertools.product((0, 1), repeat=dim)))[:, ::-1]
    gauss = np.array(list(itertools.product(g, repeat=dim)))
    nen = 2**dim
    grads = np.empty((len(gauss), nen, dim))
    for qi, xi in enumerate(gauss):
        for a, c in enumerate(corners):
            lin = np.where(c == 1, xi, 1.0 - xi)
            dlin = np.where(c == 1, 1.0, -1.0)
            for d in range(dim):
                prod = dlin[d]
                for e in range(dim):
                    if e != d:
                        prod *= lin[e]
                grads[qi, a, d] = prod / h
    weight = h**dim / len(gauss)
    return grads, weight, corners


def element_connectivity(counts):
    """Lexicographic node indices of every cell, shape ``(E, 2**dim)``."""
    dim = len(counts)
    strides = np.cumprod([1] + list(counts[:-1]))
    cell_axes = [np.arange(c - 1) for c in counts]
    base = np.stack(np.meshgrid(*cell_axes, indexing="ij"), axis=-1).reshape(-1, dim)
    corners = np.array(list(itertools.product((0, 1), repeat=dim)))[:, ::-1]
    idx = (base[:, None, :] + corners[None, :, :]) @ strides
    return idx


def fem_operator(cloud: NodeCloud, d0, rho):
    """``M_L^{-1} K`` for the lattice cloud, in node order of ``cloud``.

    Element tensors are the mean of the nodal tensors; elements touching
    a non-conducting node (``d0 == 0``) carry no diffusion.
    """
    lat = detect_lattice(cloud)
    if lat is None:
        raise NotStructuredError("FEM reference requires a complete regular lattice cloud")
    counts, _, h, order = lat
    dim = cloud.dim
    conn_lex = element_connectivity(counts)
    conn = order[conn_lex]
    tensors = nodal_tensors(cloud, d0, rho)
    d0n = np.broadcast_to(np.asarray(d0, float), (len(cloud),))
    De = tensors[conn].mean(axis=1)
    De[np.any(d0n[conn] == 0, axis=1)] = 0.0

    grads, w, _ = _reference_gradients(dim, h)
    # Kab[a, b, i, j] = sum_q dN_i/dx_a dN_j/dx_b w
    kab = np.einsum("qia,qjb->abij", grads, grads) * w
    ke = np.einsum("eab,abij->eij", De, kab)
    nen = conn.shape[1]
    rows = np.repeat(conn, nen, axis=1).ravel()
    cols = np.tile(conn, (1, nen)).ravel()
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(len(cloud),) * 2).tocsr()
    K.sum_duplicates()
    lumped = np.zeros(len(cloud))
    np.add.at(lumped, conn.ravel(), h**dim / nen)
    op = sp.diags(1.0 / lumped) @ K
    op = op.tocsr()
    op.sort_indices()
    return op, lumped
