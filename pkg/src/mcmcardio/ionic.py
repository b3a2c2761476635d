"""Ionic cell models and stimulus protocols for the reaction sub-step.

Both bundled models are phenomenological with a dimensionless potential
(rest 0, peak close to 1) and time in ms. New models subclass
:class:`CellModel` and register themselves in :data:`MODELS`.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np


class InstabilityError(RuntimeError):
    """Non-finite state encountered during time stepping."""

    def __init__(self, node, time, what="state"):
        self.node = int(node)
        self.time = float(time)
        super().__init__(f"non-finite {what} at node {self.node}, t = {self.time:.6g} ms")


class CellModel(ABC):
    name = "abstract"
    n_gates = 0
    v_rest = 0.0
    v_plateau = 1.0

    @abstractmethod
    def rest_gates(self) -> np.ndarray: ...

    @abstractmethod
    def rhs(self, V, gates):
        """Return ``(dV/dt, dgates/dt)`` without stimulus."""

    def clip(self, gates):
        return gates


@dataclass
class FitzHughNagumo(CellModel):
    """Cubic FitzHugh-Nagumo variant with recovery variable ``w``."""

    a: float = 0.13
    b: float = 0.013
    c1: float = 0.26
    c2: float = 0.1
    d: float = 1.0
    name = "fhn"
    n_gates = 1

    def rest_gates(self):
        return np.array([0.0])

    def rhs(self, V, gates):
        w = gates[:, 0]
        dv = self.c1 * V * (V - self.a) * (1.0 - V) - self.c2 * w
        dw = self.b * (V - self.d * w)
        return dv, dw[:, None]


@dataclass
class MitchellSchaeffer(CellModel):
    """Two-variable Mitchell-Schaeffer model; gate ``h`` lies in [0, 1]."""

    tau_in: float = 0.3
    tau_out: float = 6.0
    tau_open: float = 120.0
    tau_close: float = 150.0
    v_gate: float = 0.13
    name = "ms"
    n_gates = 1

    def rest_gates(self):
        return np.array([1.0])

    def rhs(self, V, gates):
        h = gates[:, 0]
        dv = h * V * V * (1.0 - V) / self.tau_in - V / self.tau_out
        dh = np.where(V < self.v_gate, (1.0 - h) / self.tau_open, -h / self.tau_close)
        return dv, dh[:, None]

    def clip(self, gates):
        return np.clip(gates, 0.0, 1.0)


@dataclass
class NoReaction(CellModel):
    """Zero ionic current; turns the monodomain model into pure diffusion."""

    name = "none"
    n_gates = 0

    def rest_gates(self):
        return np.zeros(0)

    def rhs(self, V, gates):
        return np.zeros_like(V), np.zeros((len(V), 0))


MODELS = {"fhn": FitzHughNagumo, "ms": MitchellSchaeffer, "none": NoReaction}


def make_model(kind, **params) -> CellModel:
    try:
        cls = MODELS[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown ionic model {kind!r}; available: {sorted(MODELS)}") from None
    return cls(**params)


def reaction_rhs(model: CellModel, V, gates):
    """Reaction derivatives for arrays of nodes."""
    V = np.atleast_1d(np.asarray(V, float))
    gates = np.asarray(gates, float).reshape(len(V), model.n_gates)
    return model.rhs(V, gates)


@dataclass
class StimulusProtocol:
    """Periodic rectangular current pulses applied to a node subset.

    Pulse ``k`` (``0 <= k < count``) is active on
    ``[start + k*period, start + k*period + duration)``.
    """

    nodes: np.ndarray
    amplitude: float
    duration: float = 1.0
    period: float = 1000.0
    start: float = 0.0
    count: int = 1

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.int64)
        if not np.isfinite(self.amplitude):
            raise ValueError("stimulus amplitude must be finite")
        if self.duration <= 0 or self.duration >= self.period:
            raise ValueError("stimulus duration must satisfy 0 < duration < period")
        if self.count < 0:
            raise ValueError("stimulus count must be non-negative")

    def active(self, t) -> bool:
        if t < self.start:
            return False
        k = np.floor((t - self.start) / self.period)
        if k >= self.count:
            return False
        return (t - self.start - k * self.period) < self.duration


@dataclass
class CellStateField:
    V: np.ndarray
    gates: np.ndarray
    model: CellModel
    active: np.ndarray | None = field(default=None)

    @classmethod
    def at_rest(cls, model: CellModel, n, active=None):
        V = np.full(n, model.v_rest, dtype=float)
        gates = np.tile(model.rest_gates(), (n, 1))
        return cls(V, gates, model, None if active is None else np.asarray(active, bool))

    def copy(self):
        return CellStateField(
            self.V.copy(), self.gates.copy(), self.model,
            None if self.active is None else self.active.copy(),
        )


def react_step(state: CellStateField, dt, protocols, t, substeps=1):
    """Advance the reaction sub-problem by ``dt`` with forward Euler.

    ``protocols`` is a stimulus protocol or a list of them; the stimulus is
    added to ``dV/dt`` of its nodes while a pulse is active. Nodes with
    ``state.active == False`` (non-excitable tissue) are left untouched.
    The state is updated in place and returned.
    """
    if substeps < 1:
        raise ValueError("reaction substeps must be at least 1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(protocols, StimulusProtocol):
        protocols = [protocols]
    model = state.model
    h = dt / substeps
    idx = None if state.active is None else np.flatnonzero(state.active)
    # overflow is reported by the finiteness guard below
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(substeps):
            ts = t + s * h
            V = state.V if idx is None else state.V[idx]
            g = state.gates if idx is None else state.gates[idx]
            dv, dg = model.rhs(V, g)
            for p in protocols or ():
                if p.amplitude != 0.0 and p.active(ts):
                    if idx is None:
                        dv[p.nodes] += p.amplitude
                    else:
                        stim = np.zeros(len(state.V))
                        stim[p.nodes] = p.amplitude
                        dv += stim[idx]
            newV = V + h * dv
            newg = model.clip(g + h * dg)
            if idx is None:
                state.V, state.gates = newV, newg
            else:
                state.V[idx], state.gates[idx] = newV, newg
    bad = ~np.isfinite(state.V)
    if bad.any():
        raise InstabilityError(np.flatnonzero(bad)[0], t + dt, "potential")
    return state


def single_cell_trace(model: CellModel, amplitude, duration, t_end, dt, start=0.0):
    """Integrate one stimulated cell; returns ``(t, V)``."""
    state = CellStateField.at_rest(model, 1)
    proto = StimulusProtocol(np.array([0]), amplitude, duration, period=max(2 * t_end, duration * 2), start=start)
    steps = int(round(t_end / dt))
    V = np.empty(steps + 1)
    V[0] = state.V[0]
    for k in range(steps):
        react_step(state, dt, proto, k * dt)
        V[k + 1] = state.V[0]
    return np.arange(steps + 1) * dt, V


def is_excited(model: CellModel, amplitude, duration, window=50.0, dt=0.01):
    _, V = single_cell_trace(model, amplitude, duration, window, dt)
    return bool(V.max() > model.v_rest + 0.8 * (model.v_plateau - model.v_rest))


def diastolic_threshold(model: CellModel, duration=1.0, a_max=10.0, iterations=20, dt=0.01):
    """Smallest pulse amplitude that excites a resting cell (bisection)."""
    lo, hi = 0.0, float(a_max)
    if is_excited(model, lo, duration, dt=dt):
        raise ValueError("cell is excited without stimulus; no threshold bracket")
    if not is_excited(model, hi, duration, dt=dt):
        raise ValueError(f"no excitation up to amplitude {a_max}; threshold bracket not found")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if is_excited(model, mid, duration, dt=dt):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def apd(t, V, fraction=0.9, v_rest=0.0):
    """Action potential duration at ``fraction`` repolarization.

    Measured between the upward and the following downward crossing of
    ``v_rest + (1 - fraction) * (max V - v_rest)``, both linearly
    interpolated. Returns NaN if either crossing is missing.
    """
    level = v_rest + (1.0 - fraction) * (V.max() - v_rest)
    above = V >= level
    up = np.flatnonzero(~above[:-1] & above[1:])
    if up.size == 0:
        return float("nan")
    k = up[0]
    t_up = t[k] + (level - V[k]) / (V[k + 1] - V[k]) * (t[k + 1] - t[k])
    down = np.flatnonzero(above[:-1] & ~above[1:])
    down = down[down > k]
    if down.size == 0:
        return float("nan")
    j = down[0]
    t_down = t[j] + (level - V[j]) / (V[j + 1] - V[j]) * (t[j + 1] - t[j])
    return float(t_down - t_up)
