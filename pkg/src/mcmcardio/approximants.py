"""Interpolating meshfree trial functions: radial point interpolation (RPI)
and moving Kriging interpolation (MKI), both built on the multiquadric RBF.

Each support is mapped to local coordinates ``(x - x_I) / d_c`` before the
moment matrices are formed. The RBF then uses the dimensionless shape
parameter ``alpha_c`` directly, and the interpolant is unchanged because
the polynomial span and the relative RBF scaling are preserved. Gradients
are mapped back by dividing by ``d_c``.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgWarning, lapack, lu_factor, lu_solve

from .nodes import NodeCloud
from .supports import SupportTable

COND_LIMIT = 1e12

RPI = "rpi"
MKI = "mki"

DEFAULT_Q = {2: 1.42, 3: 1.82}
DEFAULT_ALPHA_C = 1.03


class SingularSupportError(ValueError):
    """Moment matrix of a support is numerically singular."""

    def __init__(self, node, cond, what="G"):
        self.node = node
        self.cond = cond
        super().__init__(
            f"node {node}: {what} matrix is numerically singular "
            f"(condition estimate {cond:.3e}); check for duplicate or degenerate nodes"
        )


@dataclass(frozen=True)
class RBFParams:
    alpha_c: float = DEFAULT_ALPHA_C
    q_exp: float = DEFAULT_Q[2]
    kind: str = RPI
    nugget: float = 0.0

    def __post_init__(self):
        if self.alpha_c <= 0:
            raise ValueError("alpha_c must be positive")
        if self.q_exp <= 0 or float(self.q_exp).is_integer():
            raise ValueError("q_exp must be positive and not an integer")
        if self.kind not in (RPI, MKI):
            raise ValueError(f"unknown approximant kind {self.kind!r}")
        if self.nugget < 0:
            raise ValueError("nugget must be non-negative")

    @classmethod
    def defaults(cls, dim, kind=RPI):
        return cls(alpha_c=DEFAULT_ALPHA_C, q_exp=DEFAULT_Q[dim], kind=kind)


def mq_rbf(diff, r_c, q):
    """Multiquadric RBF ``(d^2 + r_c^2)^q`` and its gradient.

    Parameters
    ----------
    diff : array_like, shape (..., dim)
        Coordinate differences ``x_I - x_i``.

    Returns
    -------
    value : ndarray, shape (...)
    grad : ndarray, shape (..., dim)
        Derivative with respect to ``x_I``.
    """
    diff = np.asarray(diff, dtype=float)
    base = np.sum(diff * diff, axis=-1) + r_c * r_c
    value = base**q
    grad = (2.0 * q * base ** (q - 1.0))[..., None] * diff
    return value, grad


def _cond(lu, anorm):
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond <= 0:
        return np.inf
    return 1.0 / rcond


def _factor(mat, node, what):
    # singular factors are reported below with the node index
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(mat, check_finite=False)
    if not np.all(np.isfinite(lu)) or np.any(np.diag(lu) == 0):
        raise SingularSupportError(node, np.inf, what)
    cond = _cond(lu, np.abs(mat).sum(axis=0).max())
    if cond > COND_LIMIT:
        raise SingularSupportError(node, cond, what)
    return (lu, piv), cond


class LocalInterpolant:
    """Trial functions of one support, factorized once.

    The moment matrices do not depend on the evaluation point, so any
    number of points can be evaluated after construction.
    """

    def __init__(self, support_coords, center, scale, params: RBFParams, node=-1):
        self.center = np.asarray(center, float)
        self.scale = float(scale)
        self.params = params
        xs = (np.asarray(support_coords, float) - self.center) / self.scale
        self.xs = xs
        n, dim = xs.shape
        self.n, self.dim, self.m = n, dim, dim + 1
        if n < self.m + 1:
            raise ValueError(f"node {node}: support has {n} nodes, needs {self.m + 1}")
        R, _ = mq_rbf(xs[:, None, :] - xs[None, :, :], params.alpha_c, params.q_exp)
        P = np.hstack([np.ones((n, 1)), xs])
        if params.kind == RPI:
            G = np.zeros((n + self.m, n + self.m))
            G[:n, :n] = R
            G[:n, n:] = P
            G[n:, :n] = P.T
            self._G, self.cond = _factor(G, node, "G")
        else:
            C = R + params.nugget * np.eye(n)
            self._C, cond_c = _factor(C, node, "correlation")
            self._P = P
            Y = lu_solve(self._C, P, check_finite=False)  # C^{-1} P
            # N = Y^T P equals P^T C^{-1} P for symmetric C; this ordering
            # makes A P = I hold to rounding of the small m x m solve
            normal = Y.T @ P
            nfac, cond_n = _factor(normal, node, "normal")
            self.A = lu_solve(nfac, Y.T, check_finite=False)
            self.cond = max(cond_c, cond_n)

    @property
    def B(self):
        """MKI matrix ``C^{-1} (I - P A)`` (formed on demand)."""
        return lu_solve(self._C, np.eye(self.n) - self._P @ self.A, check_finite=False)

    def rows(self, points):
        """RBF and polynomial rows at ``points`` in local coordinates.

        Returns ``r (k, n)``, ``dr (k, dim, n)``, ``p (k, m)``,
        ``dp (k, dim, m)``; derivatives are per unit local coordinate.
        """
        e = (np.atleast_2d(np.asarray(points, float)) - self.center) / self.scale
        k, dim = len(e), self.dim
        r, dr = mq_rbf(e[:, None, :] - self.xs[None, :, :], self.params.alpha_c, self.params.q_exp)
        p = np.hstack([np.ones((k, 1)), e])
        dp = np.zeros((k, dim, self.m))
        dp[:, np.arange(dim), np.arange(1, dim + 1)] = 1.0
        return r, dr.transpose(0, 2, 1), p, dp

    def apply(self, r, p):
        """Map stacked rows ``r (k, n)``, ``p (k, m)`` to trial-function rows.

        The map is linear, so it turns value rows into ``phi`` and
        derivative rows into derivatives of ``phi``.
        """
        n = self.n
        if self.params.kind == RPI:
            # G is symmetric, so phi^T = G^{-1} {r p}^T
            rhs = np.hstack([r, p]).T
            return lu_solve(self._G, rhs, check_finite=False)[:n].T
        # phi = p A + c B evaluated as w + (p - w P) A with w = C^{-1} c
        w = lu_solve(self._C, r.T, check_finite=False).T
        return w + (p - w @ self._P) @ self.A

    def evaluate(self, points):
        """Values ``(k, n)`` and gradients ``(k, n, dim)`` at ``points``."""
        r, dr, p, dp = self.rows(points)
        k, dim = len(r), self.dim
        out = self.apply(
            np.vstack([r, dr.reshape(k * dim, self.n)]),
            np.vstack([p, dp.reshape(k * dim, self.m)]),
        )
        phi = out[:k]
        grad = out[k:].reshape(k, dim, self.n).transpose(0, 2, 1) / self.scale
        return phi, grad


def local_interpolant(cloud: NodeCloud, supports: SupportTable, node, params: RBFParams):
    nb = supports.neighbors(node)
    coords = cloud.coords
    return LocalInterpolant(coords[nb], coords[node], supports.radius[node], params, node)


def rpi_shape(cloud, supports, node, params, eval_point):
    """RPI trial functions of ``node``'s support at ``eval_point``."""
    params = RBFParams(params.alpha_c, params.q_exp, RPI, params.nugget)
    phi, grad = local_interpolant(cloud, supports, node, params).evaluate(eval_point)
    return phi[0], grad[0]


def mki_shape(cloud, supports, node, params, eval_point):
    """MKI trial functions of ``node``'s support at ``eval_point``."""
    params = RBFParams(params.alpha_c, params.q_exp, MKI, params.nugget)
    phi, grad = local_interpolant(cloud, supports, node, params).evaluate(eval_point)
    return phi[0], grad[0]


@dataclass
class ShapeFunctionSet:
    """Trial-function values and gradients at every collocation node.

    Entries are aligned with ``supports.indices``: ``phi[k]`` and
    ``grad[k]`` belong to node ``I`` and support member
    ``supports.indices[k]`` for ``indptr[I] <= k < indptr[I+1]``.
    """

    supports: SupportTable
    phi: np.ndarray
    grad: np.ndarray
    cond: np.ndarray
    dim: int

    def __len__(self):
        return len(self.supports)

    def _matrix(self, data):
        n = len(self)
        return sp.csr_matrix(
            (data, self.supports.indices, self.supports.indptr), shape=(n, n)
        )

    def value_matrix(self) -> sp.csr_matrix:
        return self._matrix(self.phi)

    def gradient_matrix(self, d) -> sp.csr_matrix:
        """Sparse ``D_d`` with ``(D_d V)_I`` the d-th derivative of V at x_I."""
        return self._matrix(self.grad[:, d])

    def row(self, i):
        s = slice(self.supports.indptr[i], self.supports.indptr[i + 1])
        return self.supports.indices[s], self.phi[s], self.grad[s]


def build_all(cloud: NodeCloud, supports: SupportTable, params: RBFParams, workers=1):
    """Trial functions of every node evaluated at its own position.

    Nodes are independent; ``workers > 1`` spreads them over threads
    (LAPACK releases the GIL). The output does not depend on the worker
    count.
    """
    n = len(cloud)
    nnz = len(supports.indices)
    phi = np.empty(nnz)
    grad = np.empty((nnz, cloud.dim))
    cond = np.empty(n)
    coords = cloud.coords

    def work(block):
        for i in block:
            s, e = supports.indptr[i], supports.indptr[i + 1]
            loc = local_interpolant(cloud, supports, i, params)
            p, g = loc.evaluate(coords[i])
            phi[s:e] = p[0]
            grad[s:e] = g[0]
            cond[i] = loc.cond

    blocks = np.array_split(np.arange(n), max(1, min(n, 4 * workers)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, blocks))
    else:
        for b in blocks:
            work(b)
    return ShapeFunctionSet(supports, phi, grad, cond, cloud.dim)
