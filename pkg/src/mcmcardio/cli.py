"""Command-line front end.

Commands::

    mcmcardio simulate <config>
    mcmcardio immerse <surface.off> --spacing <cm> -o <cloud.txt>
    mcmcardio compare <dirA> <dirB> [-o <dir>]
    mcmcardio shapecheck <cloud.txt> [--kind rpi|mki] [--alpha-c] [--q] [--alpha-sd | --knn]

Exit codes: 0 success, 1 check failed, 2 usage, 3 configuration error,
4 numerical abort, 5 file IO failure. ``MCMCARDIO_LOG`` sets the log
level (e.g. ``DEBUG``, default ``WARNING``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .approximants import DEFAULT_ALPHA_C, DEFAULT_Q, RBFParams, SingularSupportError
from .checks import check_shapes
from .config import ConfigError, load_config
from .ionic import InstabilityError
from .metrics import nrms, tpd
from .nodes import read_cloud, write_cloud
from .output import (
    LAT,
    TRACES,
    final_snapshot,
    read_lat,
    read_traces,
    read_vtk,
    write_run,
)
from .supports import build_support_knn, build_support_radius
from .surface import immerse_grid, read_off

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_CONFIG = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

log = logging.getLogger("mcmcardio")


class CompareError(ValueError):
    pass


def cmd_simulate(args):
    from . import solver

    cfg = load_config(args.config)
    if args.threads:
        cfg.solver.threads = args.threads
    cloud = solver.build_cloud(cfg)
    K, timing = solver.build_operator(cfg, cloud)
    result = solver.run_simulation(cfg, cloud=cloud, operator=K)
    timing.update(result.timing)
    out = cfg.path(cfg.output.directory)
    files = write_run(result, out, cfg.time.dt)
    if cfg.output.figures:
        from .plotting import plot_lat, plot_traces

        plot_traces(out / "traces.png", result.times, result.traces)
        plot_lat(out / "lat.png", cloud.points, result.lat.times)
    print(f"nodes            {len(cloud)}")
    print(f"solver           {cfg.solver.kind}")
    print(f"trial functions  {timing.get('trial_functions', 0.0):.3f} s")
    print(f"assembly         {timing.get('assembly', 0.0):.3f} s")
    print(f"time loop        {timing.get('time_loop', 0.0):.3f} s")
    print(f"activated nodes  {int(result.lat.activated.sum())}/{len(cloud)}")
    print(f"wrote {len(files)} files to {out}")
    return EXIT_OK


def cmd_immerse(args):
    mesh = read_off(args.surface)
    cloud = immerse_grid(mesh, args.spacing)
    write_cloud(cloud, args.output, normals=True)
    n_s = int(cloud.boundary.sum())
    print(f"interior nodes {len(cloud) - n_s}")
    print(f"surface nodes  {n_s}")
    print(f"wrote {args.output}")
    return EXIT_OK


def compare_runs(dir_a, dir_b):
    """Metrics between two run directories, as a dict."""
    dir_a, dir_b = Path(dir_a), Path(dir_b)
    cloud_a, lat_a = read_lat(dir_a / LAT)
    cloud_b, lat_b = read_lat(dir_b / LAT)
    if cloud_a.points.shape != cloud_b.points.shape or not np.allclose(
        cloud_a.points, cloud_b.points, rtol=0, atol=1e-12
    ):
        raise CompareError("runs use different node clouds")
    t_a, tr_a = read_traces(dir_a / TRACES)
    t_b, tr_b = read_traces(dir_b / TRACES)
    if tr_a.shape != tr_b.shape or not np.allclose(t_a, t_b, rtol=0, atol=1e-9):
        raise CompareError("runs have different probes or time grids")
    _, v_a = read_vtk(final_snapshot(dir_a))
    _, v_b = read_vtk(final_snapshot(dir_b))
    interior = ~cloud_a.boundary
    return {
        "times": t_a,
        "traces_a": tr_a,
        "traces_b": tr_b,
        "nrms": nrms(v_a, v_b),
        "tpd": np.atleast_1d(tpd(tr_a, tr_b)) if tr_a.shape[1] else np.zeros(0),
        "lat_in": (_mean(lat_a[interior]), _mean(lat_b[interior])),
        "lat_s": (_mean(lat_a[~interior]), _mean(lat_b[~interior])),
    }


def _mean(x):
    x = x[np.isfinite(x)]
    return float(x.mean()) if x.size else float("nan")


def cmd_compare(args):
    m = compare_runs(args.run_a, args.run_b)
    rows = [("nrms_final", m["nrms"])]
    rows += [(f"tpd_probe{i}", v) for i, v in enumerate(m["tpd"])]
    rows += [
        ("lat_in_a", m["lat_in"][0]),
        ("lat_in_b", m["lat_in"][1]),
        ("lat_in_diff", m["lat_in"][0] - m["lat_in"][1]),
        ("lat_s_a", m["lat_s"][0]),
        ("lat_s_b", m["lat_s"][1]),
        ("lat_s_diff", m["lat_s"][0] - m["lat_s"][1]),
    ]
    for k, v in rows:
        print(f"{k:<14s} {v:.6g}")
    out = Path(args.output) if args.output else Path(args.run_a)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.csv").write_text(
        "metric,value\n" + "".join(f"{k},{float(v)!r}\n" for k, v in rows)
    )
    if not args.no_figures:
        from .plotting import plot_compare

        plot_compare(out / "compare.png", m["times"], m["traces_a"], m["traces_b"],
                     Path(args.run_a).name, Path(args.run_b).name)
    return EXIT_OK


def cmd_shapecheck(args):
    cloud = read_cloud(args.cloud)
    q = args.q if args.q else DEFAULT_Q[cloud.dim]
    params = RBFParams(alpha_c=args.alpha_c, q_exp=q, kind=args.kind)
    if args.knn:
        supports = build_support_knn(cloud, args.knn)
    else:
        supports = build_support_radius(cloud, args.alpha_sd)
    report = check_shapes(cloud, supports, params, seed=args.seed)
    print(f"nodes {len(cloud)}, dim {cloud.dim}, {params.kind}, alpha_c {params.alpha_c}, q {params.q_exp}")
    for line in report.lines():
        print(line)
    print("PASS" if report.ok else "FAIL")
    return EXIT_OK if report.ok else EXIT_CHECK


def build_parser():
    p = argparse.ArgumentParser(prog="mcmcardio", description="Meshfree collocation monodomain solver")
    p.add_argument("--threads", type=int, default=0, help="cap on worker threads (0: config value)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a simulation from a config file")
    s.add_argument("config")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("immerse", help="build an immersed-grid node cloud from a closed surface")
    s.add_argument("surface")
    s.add_argument("--spacing", type=float, required=True, help="lattice spacing [cm]")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_immerse)

    s = sub.add_parser("compare", help="metrics between two run directories")
    s.add_argument("run_a")
    s.add_argument("run_b")
    s.add_argument("-o", "--output", default=None, help="report directory (default: run_a)")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("shapecheck", help="trial-function invariant checks on a cloud")
    s.add_argument("cloud")
    s.add_argument("--kind", choices=("rpi", "mki"), default="rpi")
    s.add_argument("--alpha-c", type=float, default=DEFAULT_ALPHA_C)
    s.add_argument("--q", type=float, default=0.0, help="MQ exponent (0: 1.42 in 2D, 1.82 in 3D)")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--alpha-sd", type=float, default=2.8)
    g.add_argument("--knn", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_shapecheck)
    return p


def main(argv=None):
    level = os.environ.get("MCMCARDIO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InstabilityError, SingularSupportError, np.linalg.LinAlgError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"IO failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, CompareError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
