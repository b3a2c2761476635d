"""Simulation configuration files.

INI-style text: ``[section]`` headers followed by ``key = value`` lines.
Unknown sections and keys are rejected. Units are fixed: lengths in cm,
times in ms, diffusion in cm^2/ms. Relative paths are resolved against
the directory of the config file.

Region values (stimulus, scar) use one of::

    box: xmin, ymin, zmin, xmax, ymax, zmax
    sphere: cx, cy, cz, radius
    nodes: 0, 5, 17
    none
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _vectors(text):
    """``"x, y, z; x, y, z"`` -> tuple of tuples."""
    if not text.strip():
        return ()
    return tuple(_floats(part) for part in text.split(";") if part.strip())


@dataclass
class GeometryConfig:
    kind: str = "grid"  # grid | file | immersed
    extent: tuple = (1.0, 1.0)
    h: float = 0.05
    cloud: str = ""
    surface: str = ""
    fiber: tuple = (1.0, 0.0, 0.0)


@dataclass
class SupportsConfig:
    kind: str = "radius"  # radius | knn
    alpha_sd: float = 2.8
    k: int = 150


@dataclass
class ApproximantConfig:
    kind: str = "rpi"  # rpi | mki
    alpha_c: float = 1.03
    q: float = 0.0  # 0 selects 1.42 in 2D and 1.82 in 3D
    nugget: float = 0.0


@dataclass
class DiffusionConfig:
    d0: float = 0.0013
    rho: float = 0.2
    penalty: float = 1e6
    scar: str = "none"


@dataclass
class IonicConfig:
    model: str = "ms"  # ms | fhn | none
    initial: str = ""  # expression in x, y, z; empty = rest state


@dataclass
class StimulusConfig:
    region: str = "none"
    amplitude: float = 0.0
    threshold_factor: float = 0.0  # > 0: amplitude = factor * diastolic threshold
    duration: float = 1.0
    period: float = 1000.0
    start: float = 0.0
    count: int = 1


@dataclass
class TimeConfig:
    dt: float = 0.1
    t_end: float = 100.0
    substeps: int = 1
    snapshot_every: int = 0  # steps between snapshots; 0 = initial and final only


@dataclass
class OutputConfig:
    directory: str = "out"
    probes: tuple = ()
    lat_threshold: float = 0.5
    figures: bool = True


@dataclass
class SolverConfig:
    kind: str = "mcm"  # mcm | fem
    threads: int = 1


SECTIONS = {
    "geometry": GeometryConfig,
    "supports": SupportsConfig,
    "approximant": ApproximantConfig,
    "diffusion": DiffusionConfig,
    "ionic": IonicConfig,
    "stimulus": StimulusConfig,
    "time": TimeConfig,
    "output": OutputConfig,
    "solver": SolverConfig,
}

CHOICES = {
    ("geometry", "kind"): ("grid", "file", "immersed"),
    ("supports", "kind"): ("radius", "knn"),
    ("approximant", "kind"): ("rpi", "mki"),
    ("ionic", "model"): ("ms", "fhn", "none"),
    ("solver", "kind"): ("mcm", "fem"),
}


@dataclass
class SimulationConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    supports: SupportsConfig = field(default_factory=SupportsConfig)
    approximant: ApproximantConfig = field(default_factory=ApproximantConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    ionic: IonicConfig = field(default_factory=IonicConfig)
    stimulus: StimulusConfig = field(default_factory=StimulusConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    base_dir: str = field(default=".", compare=False)

    def path(self, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def validate(self):
        t = self.time
        if t.dt <= 0:
            raise ConfigError("time.dt must be positive")
        if t.t_end < t.dt:
            raise ConfigError("time.t_end must be at least dt")
        if t.substeps < 1:
            raise ConfigError("time.substeps must be at least 1")
        if t.snapshot_every < 0:
            raise ConfigError("time.snapshot_every must be non-negative")
        g = self.geometry
        if g.kind == "grid":
            if len(g.extent) not in (2, 3):
                raise ConfigError("geometry.extent needs 2 or 3 values")
            if g.h <= 0:
                raise ConfigError("geometry.h must be positive")
        elif g.kind == "file" and not g.cloud:
            raise ConfigError("geometry.cloud is required for kind = file")
        elif g.kind == "immersed" and not g.surface:
            raise ConfigError("geometry.surface is required for kind = immersed")
        if self.diffusion.d0 < 0 or not 0 < self.diffusion.rho <= 1:
            raise ConfigError("diffusion.d0 must be >= 0 and rho in (0, 1]")
        if self.supports.alpha_sd <= 1:
            raise ConfigError("supports.alpha_sd must exceed 1")
        s = self.stimulus
        if s.duration <= 0 or s.duration >= s.period:
            raise ConfigError("stimulus duration must satisfy 0 < duration < period")
        parse_region(s.region)
        parse_region(self.diffusion.scar)
        for p in self.output.probes:
            if len(p) not in (2, 3):
                raise ConfigError("each probe needs 2 or 3 coordinates")
        return self


def _convert(section, key, ftype, default, raw):
    try:
        if isinstance(default, bool):
            v = raw.strip().lower()
            if v in ("1", "yes", "true", "on"):
                return True
            if v in ("0", "no", "false", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return _vectors(raw) if key == "probes" else _floats(raw)
        value = raw.strip()
        choices = CHOICES.get((section, key))
        if choices and value.lower() not in choices:
            raise ValueError(f"expected one of {choices}")
        return value.lower() if choices else value
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: invalid value {raw!r} ({exc})") from None


def parse_config_text(text, base_dir=".") -> SimulationConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = SimulationConfig(base_dir=str(base_dir))
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        obj = getattr(cfg, name)
        known = {f.name: f for f in dataclasses.fields(obj)}
        for key, raw in parser.items(name):
            if key not in known:
                raise ConfigError(f"[{name}] unknown key {key!r}")
            default = getattr(SECTIONS[name](), key)
            setattr(obj, key, _convert(name, key, known[key].type, default, raw))
    return cfg.validate()


def load_config(path) -> SimulationConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config_text(text, base_dir=path.parent)


def _format(value):
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(", ".join(repr(float(x)) for x in v) for v in value)
        return ", ".join(repr(float(x)) for x in value)
    return str(value)


def dump_config(cfg: SimulationConfig) -> str:
    lines = []
    for name in SECTIONS:
        obj = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def parse_region(text):
    """Return ``(kind, values)`` for a region string."""
    text = text.strip()
    if not text or text.lower() == "none":
        return ("none", ())
    if ":" not in text:
        raise ConfigError(f"region {text!r}: expected 'kind: values'")
    kind, vals = text.split(":", 1)
    kind = kind.strip().lower()
    if kind == "nodes":
        try:
            return ("nodes", tuple(int(v) for v in vals.split(",") if v.strip()))
        except ValueError:
            raise ConfigError(f"region {text!r}: node ids must be integers") from None
    try:
        nums = _floats(vals)
    except ValueError:
        raise ConfigError(f"region {text!r}: bad numbers") from None
    if kind == "box" and len(nums) == 6:
        return ("box", nums)
    if kind == "sphere" and len(nums) == 4:
        return ("sphere", nums)
    raise ConfigError(f"region {text!r}: expected box (6 values), sphere (4) or nodes")


def region_mask(text, points) -> np.ndarray:
    """Boolean mask of the nodes inside a region (boundaries inclusive)."""
    kind, vals = parse_region(text)
    points = np.asarray(points, float)
    n = len(points)
    if kind == "none":
        return np.zeros(n, dtype=bool)
    if kind == "nodes":
        mask = np.zeros(n, dtype=bool)
        ids = np.asarray(vals, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise ConfigError("region node id out of range")
        mask[ids] = True
        return mask
    tol = 1e-9
    if kind == "box":
        lo, hi = np.array(vals[:3]), np.array(vals[3:])
        return np.all((points >= lo - tol) & (points <= hi + tol), axis=1)
    c, r = np.array(vals[:3]), vals[3]
    return np.linalg.norm(points - c, axis=1) <= r + tol


def initial_field(expr, points):
    """Evaluate an initial-potential expression in ``x, y, z`` (numpy names)."""
    names = {
        k: getattr(np, k)
        for k in ("cos", "sin", "exp", "sqrt", "tanh", "pi", "abs", "where", "minimum", "maximum")
    }
    names.update(x=points[:, 0], y=points[:, 1], z=points[:, 2])
    try:
        out = eval(expr, {"__builtins__": {}}, names)  # noqa: S307 - local config files only
    except Exception as exc:
        raise ConfigError(f"[ionic] initial: cannot evaluate {expr!r}: {exc}") from None
    return np.broadcast_to(np.asarray(out, dtype=float), (len(points),)).copy()
