"""Operator-splitting time integration of the monodomain model.

Each step applies the reaction update (ionic model plus stimulus) and then
one explicit diffusion update ``V <- V - dt K' V``. The same loop drives
the meshfree operator and the structured-grid FEM reference, so the two
differ only in how ``K'`` is built.
"""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .approximants import RBFParams, build_all, DEFAULT_Q
from .assembly import assemble_system
from .config import ConfigError, SimulationConfig, initial_field, region_mask
from .fem import fem_operator
from .ionic import (
    CellStateField,
    InstabilityError,
    StimulusProtocol,
    diastolic_threshold,
    make_model,
    react_step,
)
from .metrics import LATMap, LATTracker
from .nodes import NodeCloud, generate_regular_grid, read_cloud
from .supports import build_support_knn, build_support_radius
from .surface import immerse_grid, read_off

log = logging.getLogger(__name__)


def step_diffusion(V, K, dt, t=float("nan")):
    """One explicit diffusion update ``V - dt * (K V)``."""
    with np.errstate(over="ignore", invalid="ignore"):
        out = V - dt * (K @ V)
    if not np.all(np.isfinite(out)):
        raise InstabilityError(np.flatnonzero(~np.isfinite(out))[0], t, "potential (diffusion)")
    return out


def stability_bound(K) -> float:
    """Gershgorin estimate ``2 / max_I sum_J |K_IJ|`` of the largest stable dt."""
    rows = np.asarray(abs(sp.csr_matrix(K)).sum(axis=1)).ravel()
    top = rows.max() if rows.size else 0.0
    return float("inf") if top == 0 else 2.0 / top


@dataclass
class SimulationResult:
    cloud: NodeCloud
    times: np.ndarray
    traces: np.ndarray
    probe_nodes: np.ndarray
    snapshots: list
    lat: LATMap
    timing: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.snapshots[-1][1]


def build_cloud(cfg: SimulationConfig) -> NodeCloud:
    g = cfg.geometry
    if g.kind == "grid":
        cloud = generate_regular_grid(g.extent, g.h, fiber=g.fiber)
    elif g.kind == "file":
        try:
            cloud = read_cloud(cfg.path(g.cloud))
        except OSError as exc:
            raise OSError(f"cannot read cloud {cfg.path(g.cloud)}: {exc}") from exc
    else:
        try:
            mesh = read_off(cfg.path(g.surface))
        except OSError as exc:
            raise OSError(f"cannot read surface {cfg.path(g.surface)}: {exc}") from exc
        cloud = immerse_grid(mesh, g.h, fiber=g.fiber)
    cloud.validate()
    return cloud


def rbf_params(cfg: SimulationConfig, dim) -> RBFParams:
    a = cfg.approximant
    q = a.q if a.q > 0 else DEFAULT_Q[dim]
    return RBFParams(alpha_c=a.alpha_c, q_exp=q, kind=a.kind, nugget=a.nugget)


def conductivity(cfg: SimulationConfig, cloud: NodeCloud):
    d0 = np.full(len(cloud), cfg.diffusion.d0)
    d0[region_mask(cfg.diffusion.scar, cloud.points)] = 0.0
    return d0


def build_operator(cfg: SimulationConfig, cloud: NodeCloud):
    """Return the diffusion operator ``K'`` and a timing dictionary."""
    timing = {}
    d0 = conductivity(cfg, cloud)
    if cfg.solver.kind == "fem":
        t0 = _time.perf_counter()
        K, _ = fem_operator(cloud, d0, cfg.diffusion.rho)
        timing["assembly"] = _time.perf_counter() - t0
        return K, timing
    t0 = _time.perf_counter()
    if cfg.supports.kind == "knn":
        supports = build_support_knn(cloud, cfg.supports.k)
    else:
        supports = build_support_radius(cloud, cfg.supports.alpha_sd)
    shapes = build_all(cloud, supports, rbf_params(cfg, cloud.dim), workers=cfg.solver.threads)
    t1 = _time.perf_counter()
    mats = assemble_system(cloud, shapes, d0, cfg.diffusion.rho, cfg.diffusion.penalty)
    t2 = _time.perf_counter()
    timing["trial_functions"] = t1 - t0
    timing["assembly"] = t2 - t1
    return mats.K_prime, timing


def resolve_probes(cfg: SimulationConfig, cloud: NodeCloud):
    if not cfg.output.probes:
        return np.zeros(0, dtype=np.int64)
    pts = np.zeros((len(cfg.output.probes), 3))
    for i, p in enumerate(cfg.output.probes):
        pts[i, : len(p)] = p
    lo = cloud.points.min(axis=0) - 1e-9
    hi = cloud.points.max(axis=0) + 1e-9
    outside = ~np.all((pts >= lo) & (pts <= hi), axis=1)
    if outside.any():
        raise ConfigError(f"probe {tuple(pts[np.flatnonzero(outside)[0]])} lies outside the domain")
    _, idx = cKDTree(cloud.points).query(pts)
    return np.asarray(idx, dtype=np.int64)


def make_protocol(cfg: SimulationConfig, cloud: NodeCloud, model):
    s = cfg.stimulus
    nodes = np.flatnonzero(region_mask(s.region, cloud.points))
    amplitude = s.amplitude
    if s.threshold_factor > 0:
        amplitude = s.threshold_factor * diastolic_threshold(model, s.duration)
    if nodes.size == 0 or amplitude == 0:
        return None
    return StimulusProtocol(nodes, amplitude, s.duration, s.period, s.start, s.count)


def run_simulation(cfg: SimulationConfig, cloud=None, operator=None) -> SimulationResult:
    """Run the split reaction/diffusion loop described by ``cfg``.

    ``cloud`` and ``operator`` may be passed in to reuse work across runs.
    Snapshots are kept at ``t = 0``, every ``snapshot_every`` steps and at
    the final time.
    """
    cfg.validate()
    timing = {}
    if cloud is None:
        cloud = build_cloud(cfg)
    if operator is None:
        operator, timing = build_operator(cfg, cloud)
    K = sp.csr_matrix(operator)
    dt = cfg.time.dt
    bound = stability_bound(K)
    if dt > bound:
        log.warning("dt = %g ms exceeds the stability estimate %g ms", dt, bound)

    model = make_model(cfg.ionic.model)
    conducting = conductivity(cfg, cloud) > 0
    state = CellStateField.at_rest(model, len(cloud), None if conducting.all() else conducting)
    if cfg.ionic.initial:
        state.V = initial_field(cfg.ionic.initial, cloud.points)
    protocol = make_protocol(cfg, cloud, model)
    protocols = [protocol] if protocol is not None else []
    probes = resolve_probes(cfg, cloud)

    steps = int(round(cfg.time.t_end / dt))
    times = np.arange(steps + 1) * dt
    traces = np.empty((steps + 1, len(probes)))
    traces[0] = state.V[probes]
    snapshots = [(0.0, state.V.copy())]
    tracker = LATTracker(state.V, cfg.output.lat_threshold)
    every = cfg.time.snapshot_every

    t0 = _time.perf_counter()
    for k in range(steps):
        t = times[k]
        react_step(state, dt, protocols, t, cfg.time.substeps)
        state.V = step_diffusion(state.V, K, dt, times[k + 1])
        tracker.update(state.V, times[k + 1])
        traces[k + 1] = state.V[probes]
        if (every and (k + 1) % every == 0) or k + 1 == steps:
            snapshots.append((float(times[k + 1]), state.V.copy()))
    timing["time_loop"] = _time.perf_counter() - t0
    return SimulationResult(cloud, times, traces, probes, snapshots, tracker.result(), timing)


def fem_reference_run(cfg: SimulationConfig, cloud=None) -> SimulationResult:
    """Same protocol with the bilinear/trilinear FEM diffusion operator."""
    import dataclasses

    fem_cfg = dataclasses.replace(cfg, solver=dataclasses.replace(cfg.solver, kind="fem"))
    return run_simulation(fem_cfg, cloud=cloud)
