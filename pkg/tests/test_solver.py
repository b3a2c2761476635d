import numpy as np
import pytest
import scipy.sparse as sp

from mcmcardio.config import ConfigError, parse_config_text
from mcmcardio.ionic import InstabilityError
from mcmcardio.solver import (
    build_cloud,
    build_operator,
    fem_reference_run,
    resolve_probes,
    run_simulation,
    stability_bound,
    step_diffusion,
)


def config(text):
    return parse_config_text(text)


DIFFUSION = """
[geometry]
extent = 1.0, 1.0
h = {h}
[diffusion]
d0 = 0.001
rho = 1.0
[ionic]
model = none
initial = {initial}
[time]
dt = {dt}
t_end = {t_end}
[solver]
kind = {kind}
"""

PLANAR = """
[geometry]
extent = 1.0, 1.0
h = {h}
[diffusion]
d0 = 0.0013
rho = 0.2
[ionic]
model = ms
[stimulus]
region = box: -1, -1, -1, 0.101, 2, 1
threshold_factor = {factor}
[time]
dt = 0.05
t_end = {t_end}
[output]
probes = {probes}
"""


def test_constant_field_unchanged():
    cfg = config(DIFFUSION.format(h=0.05, initial="0.7", dt=0.05, t_end=20, kind="mcm"))
    res = run_simulation(cfg)
    np.testing.assert_allclose(res.final, 0.7, rtol=1e-12)


@pytest.mark.parametrize("kind", ["mcm", "fem"])
def test_cosine_mode_decay(kind):
    cfg = config(DIFFUSION.format(h=0.02, initial="cos(pi*x)", dt=0.05, t_end=100, kind=kind))
    res = run_simulation(cfg)
    v0 = res.snapshots[0][1]
    ratio = (res.final @ v0) / (v0 @ v0)
    assert ratio == pytest.approx(np.exp(-0.001 * np.pi**2 * 100), rel=0.02)


def test_unstable_dt_trips_guard():
    cfg = config(DIFFUSION.format(h=0.05, initial="cos(pi*x)", dt=0.05, t_end=1, kind="mcm"))
    cloud = build_cloud(cfg)
    K, _ = build_operator(cfg, cloud)
    cfg.time.dt = 10 * stability_bound(K)
    cfg.time.t_end = 2000 * cfg.time.dt
    with pytest.raises(InstabilityError, match="t = "):
        run_simulation(cfg, cloud=cloud, operator=K)


def test_step_diffusion_guard_carries_time():
    K = sp.identity(3, format="csr")
    with pytest.raises(InstabilityError, match="t = 4.5"):
        step_diffusion(np.array([np.inf, 0.0, 0.0]), K, 0.1, 4.5)


def test_stability_bound_examples():
    assert stability_bound(sp.csr_matrix((4, 4))) == np.inf
    K = sp.csr_matrix(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    assert stability_bound(K) == pytest.approx(2 / 3)
    assert stability_bound(4 * K) == pytest.approx(stability_bound(K) / 4)


def test_stability_bound_scales_with_h_squared():
    bounds = []
    for h in (0.1, 0.05):
        cfg = config(DIFFUSION.format(h=h, initial="0", dt=0.01, t_end=1, kind="mcm"))
        K, _ = build_operator(cfg, build_cloud(cfg))
        bounds.append(stability_bound(K))
    assert bounds[0] / bounds[1] == pytest.approx(4.0, rel=0.1)


def test_zero_stimulus_never_activates():
    cfg = config(PLANAR.format(h=0.1, factor=0, t_end=20, probes="0.5, 0.5"))
    res = run_simulation(cfg)
    assert not res.lat.activated.any()
    assert np.all(res.final == 0.0)


def test_probe_outside_domain_rejected():
    cfg = config(PLANAR.format(h=0.1, factor=2, t_end=1, probes="1.5, 0.5"))
    with pytest.raises(ConfigError, match="outside"):
        resolve_probes(cfg, build_cloud(cfg))


@pytest.fixture(scope="module")
def planar_run():
    cfg = config(PLANAR.format(h=0.025, factor=2, t_end=60, probes="0.4, 0.5; 0.6, 0.5"))
    return cfg, run_simulation(cfg)


def lat_rows(res, ys=(0.0, 0.25, 0.5, 1.0)):
    p = res.cloud.points
    for y in ys:
        row = np.isclose(p[:, 1], y)
        order = np.argsort(p[row, 0])
        yield p[row, 0][order], res.lat.times[row][order]


def test_planar_wave_lat_increases_on_each_parity_sublattice(planar_run):
    # away from the stimulus strip and the far wall, LAT increases with x on
    # the even and on the odd lattice columns separately
    _, res = planar_run
    for x, lat in lat_rows(res):
        m = (x > 0.15) & (x < 0.9)
        assert np.all(np.isfinite(lat[m]))
        assert np.all(np.diff(lat[m][::2]) > 0)
        assert np.all(np.diff(lat[m][1::2]) > 0)


@pytest.mark.xfail(
    strict=True,
    reason="the composite divergence-of-gradient operator damps the odd-even "
    "lattice mode weakly, so neighboring columns alternate by up to 0.5 ms in LAT",
)
def test_planar_wave_lat_increases_node_by_node(planar_run):
    _, res = planar_run
    for x, lat in lat_rows(res):
        m = x > 0.1
        assert np.all(np.diff(lat[m]) > 0)


def test_planar_wave_fem_reference_is_monotone(planar_run):
    cfg, _ = planar_run
    res = fem_reference_run(cfg)
    for x, lat in lat_rows(res):
        m = x > 0.1
        assert np.all(np.diff(lat[m]) > 0)


def first_crossing(t, v, level):
    k = np.flatnonzero((v[:-1] < level) & (v[1:] >= level))[0]
    return t[k] + (level - v[k]) / (v[k + 1] - v[k]) * (t[k + 1] - t[k])


def test_planar_speed_consistent_with_probe_traces(planar_run):
    cfg, res = planar_run
    thr = cfg.output.lat_threshold
    px = res.cloud.points[res.probe_nodes, 0]
    t_a = first_crossing(res.times, res.traces[:, 0], thr)
    t_b = first_crossing(res.times, res.traces[:, 1], thr)
    speed = (px[1] - px[0]) / (t_b - t_a)
    p = res.cloud.points
    x1 = np.flatnonzero(np.isclose(p[:, 0], 0.3) & np.isclose(p[:, 1], 0.5))[0]
    x2 = np.flatnonzero(np.isclose(p[:, 0], 0.8) & np.isclose(p[:, 1], 0.5))[0]
    dlat = res.lat.times[x2] - res.lat.times[x1]
    assert dlat == pytest.approx(0.5 / speed, rel=0.05)


def test_run_is_deterministic():
    cfg = config(PLANAR.format(h=0.1, factor=2, t_end=10, probes="0.5, 0.5"))
    a = run_simulation(cfg)
    b = run_simulation(cfg)
    assert a.final.tobytes() == b.final.tobytes()
    assert a.traces.tobytes() == b.traces.tobytes()
    np.testing.assert_array_equal(a.lat.times, b.lat.times)


def test_snapshot_cadence():
    cfg = config(DIFFUSION.format(h=0.1, initial="x", dt=0.1, t_end=1.0, kind="mcm"))
    cfg.time.snapshot_every = 4
    res = run_simulation(cfg)
    np.testing.assert_allclose([t for t, _ in res.snapshots], [0.0, 0.4, 0.8, 1.0])
    assert res.traces.shape == (11, 0)


def test_fem_reference_run_matches_fem_config():
    cfg = config(PLANAR.format(h=0.1, factor=2, t_end=10, probes="0.5, 0.5"))
    b = fem_reference_run(cfg)
    assert cfg.solver.kind == "mcm"
    cfg.solver.kind = "fem"
    c = run_simulation(cfg)
    assert b.final.tobytes() == c.final.tobytes()


def test_scar_holds_rest():
    cfg = config(PLANAR.format(h=0.05, factor=2, t_end=30, probes="0.5, 0.5"))
    cfg.diffusion.scar = "sphere: 0.6, 0.5, 0, 0.15"
    res = run_simulation(cfg)
    p = res.cloud.points
    scar = np.linalg.norm(p - [0.6, 0.5, 0], axis=1) <= 0.15
    assert np.all(res.final[scar] == 0.0)
    assert res.lat.activated[~scar].sum() > 0
