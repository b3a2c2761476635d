"""Meshfree mixed-collocation solver for the cardiac monodomain model."""

from .config import SimulationConfig, load_config, parse_config_text
from .metrics import LATMap, compute_lat, nrms, tpd
from .nodes import NodeCloud, generate_regular_grid, read_cloud, write_cloud
from .solver import fem_reference_run, run_simulation, stability_bound, step_diffusion

__version__ = "0.1.0"

__all__ = [
    "LATMap",
    "NodeCloud",
    "SimulationConfig",
    "compute_lat",
    "fem_reference_run",
    "generate_regular_grid",
    "load_config",
    "nrms",
    "parse_config_text",
    "read_cloud",
    "run_simulation",
    "stability_bound",
    "step_diffusion",
    "tpd",
    "write_cloud",
]
