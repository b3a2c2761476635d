import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcmcardio.nodes import NodeCloud, generate_regular_grid, jitter
from mcmcardio.supports import build_support_knn, build_support_radius


def lattice_offsets(alpha, dim):
    r = int(np.ceil(alpha))
    return sum(
        1 for o in itertools.product(range(-r, r + 1), repeat=dim) if np.dot(o, o) <= alpha**2 + 1e-12
    )


def center_node(cloud):
    c = cloud.points.mean(axis=0)
    return int(np.argmin(np.linalg.norm(cloud.points - c, axis=1)))


@pytest.mark.parametrize("alpha,expected", [(2.8, 21), (2.0, 13), (1.5, 9)])
def test_interior_count_2d(alpha, expected):
    cloud = generate_regular_grid((1.0, 1.0), 0.1)
    sup = build_support_radius(cloud, alpha)
    assert sup.counts[center_node(cloud)] == expected == lattice_offsets(alpha, 2)


@pytest.mark.parametrize("alpha", [2.25, 2.5, 2.75, 3.0])
def test_interior_count_3d(alpha):
    cloud = generate_regular_grid((1.0, 1.0, 1.0), 0.1)
    sup = build_support_radius(cloud, alpha)
    assert sup.counts[center_node(cloud)] == lattice_offsets(alpha, 3)


def test_axis_neighbors_only_starves_corners():
    # at 1.01 h an interior node sees itself and its 4 axis neighbors, but a
    # corner keeps only 3 nodes, fewer than the 4 a linear basis needs
    cloud = generate_regular_grid((1.0, 1.0), 0.1)
    assert lattice_offsets(1.01, 2) == 5
    with pytest.raises(ValueError, match="node 0 has 3 support nodes"):
        build_support_radius(cloud, 1.01)


def test_radius_rejects_small_alpha():
    with pytest.raises(ValueError, match="alpha_sd"):
        build_support_radius(generate_regular_grid((1.0, 1.0), 0.1), 1.0)


def test_radius_rejects_isolated_node():
    cloud = generate_regular_grid((1.0, 1.0), 0.1)
    cloud.points[0] = [-5.0, -5.0, 0.0]
    with pytest.raises(ValueError, match="node 0"):
        build_support_radius(cloud, 2.8)


def test_knn_exact_size_and_radius():
    cloud = jitter(generate_regular_grid((1.0, 1.0, 1.0), 0.1), 0.2, seed=0)
    sup = build_support_knn(cloud, 150)
    assert np.all(sup.counts == 150)
    for i in (0, 100, 700):
        nb = sup.neighbors(i)
        d = np.linalg.norm(cloud.points[nb] - cloud.points[i], axis=1)
        assert sup.radius[i] == pytest.approx(d.max())


def test_knn_whole_cloud():
    cloud = generate_regular_grid((0.3, 0.2), 0.1)
    sup = build_support_knn(cloud, len(cloud))
    for i in range(len(cloud)):
        np.testing.assert_array_equal(sup.neighbors(i), np.arange(len(cloud)))


def test_knn_out_of_range():
    cloud = generate_regular_grid((0.3, 0.2), 0.1)
    with pytest.raises(ValueError, match="k must"):
        build_support_knn(cloud, 3)
    with pytest.raises(ValueError, match="k must"):
        build_support_knn(cloud, len(cloud) + 1)


def test_knn_ties_broken_by_index():
    # collinear equidistant nodes: node 2 has neighbors 1 and 3 at the same
    # distance, and 0 and 4 beyond them
    n = 7
    pts = np.zeros((n, 3))
    pts[:, 0] = np.arange(n) * 0.1
    pts[:, 1] = [0, 0, 0, 0, 0, 0, 0.05]  # keep the cloud 2D non-degenerate
    cloud = NodeCloud(pts, np.zeros(n, bool), np.zeros((n, 3)), np.tile([1.0, 0, 0], (n, 1)),
                      np.zeros(n, int), 0.1, dim=2)
    sup = build_support_knn(cloud, 4)
    # from node 2: 1 and 3 at 0.1, then 0 and 4 tied at 0.2 -> 0 wins
    np.testing.assert_array_equal(sup.neighbors(2), [0, 1, 2, 3])
    again = build_support_knn(cloud, 4)
    np.testing.assert_array_equal(again.indices, sup.indices)


@settings(max_examples=20, deadline=None)
@given(
    seed=st.integers(0, 1000),
    alpha=st.floats(2.0, 3.5),
    k=st.integers(4, 40),
)
def test_support_lists_sorted_unique_self_inclusive(seed, alpha, k):
    cloud = jitter(generate_regular_grid((0.6, 0.6), 0.1), 0.2, seed=seed)
    for sup in (build_support_radius(cloud, alpha), build_support_knn(cloud, k)):
        for i in range(len(cloud)):
            nb = sup.neighbors(i)
            assert i in nb
            assert np.all(np.diff(nb) > 0)
            d = np.linalg.norm(cloud.points[nb] - cloud.points[i], axis=1)
            assert d.max() <= sup.radius[i] * (1 + 1e-12)
