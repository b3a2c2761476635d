"""Invariant checks for trial functions on a given cloud.

Used by the ``shapecheck`` command and by the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .approximants import LocalInterpolant, RBFParams, SingularSupportError, local_interpolant
from .nodes import NodeCloud
from .supports import SupportTable

PU_TOL = 1e-9
DELTA_TOL = 1e-8
AFFINE_TOL = 1e-9
FD_TOL = 1e-5


def central_difference(loc: LocalInterpolant, x, step):
    """Central finite difference of ``phi`` at ``x`` along each axis.

    The difference ``r(x+s) - r(x-s)`` of the multiquadric rows is formed
    as ``b^q [(1+t/b)^q - (1-t/b)^q]`` with log1p/expm1, which removes the
    cancellation of subtracting two nearly equal function values; the
    result is then mapped to trial-function differences exactly like value
    rows. Returns an ``(n, dim)`` array.
    """
    x = np.asarray(x, float)
    e = (x - loc.center) / loc.scale
    s = step / loc.scale
    diff = e - loc.xs
    q, ac = loc.params.q_exp, loc.params.alpha_c
    out = np.empty((loc.n, loc.dim))
    for d in range(loc.dim):
        b = np.sum(diff * diff, axis=1) + s * s + ac * ac
        t = 2.0 * s * diff[:, d] / b
        dr = b**q * (np.expm1(q * np.log1p(t)) - np.expm1(q * np.log1p(-t)))
        dp = np.zeros(loc.m)
        dp[1 + d] = 2.0 * s
        out[:, d] = loc.apply(dr[None, :] / (2.0 * step), dp[None, :] / (2.0 * step))[0]
    return out


@dataclass
class ShapeReport:
    max_pu: float = 0.0
    max_grad_sum: float = 0.0
    max_delta: float = 0.0
    max_affine: float = 0.0
    max_fd: float = 0.0
    worst_cond: float = 0.0
    singular: list = field(default_factory=list)
    failing: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.singular and not self.failing

    def lines(self):
        yield f"partition of unity   max |sum phi - 1|      = {self.max_pu:.3e} (tol {PU_TOL:g})"
        yield f"kronecker delta      max |phi_i(x_j) - d_ij| = {self.max_delta:.3e} (tol {DELTA_TOL:g})"
        yield f"affine reproduction  max relative error     = {self.max_affine:.3e} (tol {AFFINE_TOL:g})"
        yield f"gradient vs FD       max relative error     = {self.max_fd:.3e} (tol {FD_TOL:g})"
        yield f"gradient partition   max |sum grad| * h     = {self.max_grad_sum:.3e}"
        yield f"worst condition estimate                   = {self.worst_cond:.3e}"
        for node, err in self.singular:
            yield f"SINGULAR node {node}: {err}"
        for name, nodes in self.failing.items():
            yield f"FAIL {name}: nodes {nodes[:20]}"


def check_shapes(
    cloud: NodeCloud,
    supports: SupportTable,
    params: RBFParams,
    nodes=None,
    evals_per_node=2,
    seed=0,
    fd_step=1e-6,
) -> ShapeReport:
    """Run the invariant suite on (a subset of) the supports of ``cloud``.

    For every checked node the trial functions are evaluated at all
    support nodes (delta property) and at random points inside the support
    (partition of unity, affine reproduction, gradient vs finite
    differences with step ``fd_step * h``).
    """
    rng = np.random.default_rng(seed)
    coords = cloud.coords
    dim = cloud.dim
    rep = ShapeReport()
    nodes = range(len(cloud)) if nodes is None else nodes
    affine_c = rng.normal(size=dim + 1)
    fails = {}

    def flag(name, node):
        fails.setdefault(name, []).append(int(node))

    for i in nodes:
        nb = supports.neighbors(i)
        try:
            loc = local_interpolant(cloud, supports, i, params)
        except SingularSupportError as exc:
            rep.singular.append((int(i), str(exc)))
            continue
        rep.worst_cond = max(rep.worst_cond, loc.cond)
        phi_nodes, _ = loc.evaluate(coords[nb])
        delta = np.abs(phi_nodes - np.eye(len(nb))).max()
        rep.max_delta = max(rep.max_delta, delta)
        if delta > DELTA_TOL:
            flag("kronecker delta", i)

        radius = supports.radius[i]
        pts = coords[i] + rng.uniform(-0.5, 0.5, size=(evals_per_node, dim)) * radius
        pts = np.vstack([coords[i], pts])
        phi, grad = loc.evaluate(pts)
        pu = np.abs(phi.sum(axis=1) - 1.0).max()
        gs = np.abs(grad.sum(axis=1)).max() * cloud.h
        rep.max_pu = max(rep.max_pu, pu)
        rep.max_grad_sum = max(rep.max_grad_sum, gs)
        if pu > PU_TOL:
            flag("partition of unity", i)

        u_nodes = affine_c[0] + coords[nb] @ affine_c[1:]
        u_exact = affine_c[0] + pts @ affine_c[1:]
        scale = np.abs(u_nodes).max() + np.abs(affine_c).max()
        aff = np.abs(phi @ u_nodes - u_exact).max() / scale
        rep.max_affine = max(rep.max_affine, aff)
        if aff > AFFINE_TOL:
            flag("affine reproduction", i)

        step = fd_step * cloud.h
        for k, x in enumerate(pts):
            fd = central_difference(loc, x, step)
            err = np.abs(fd - grad[k]).max() / np.abs(grad[k]).max()
            rep.max_fd = max(rep.max_fd, err)
            if err > FD_TOL:
                flag("gradient vs FD", i)
                break
    rep.failing = fails
    return rep
