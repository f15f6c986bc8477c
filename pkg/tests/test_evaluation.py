import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from pantilt.evaluation import SpatialIndex, nearest_neighbor, rmse_n_closest


def brute_nearest(points, query):
    diff = points - query
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    i = int(np.argmin(dist))  # argmin returns the first minimum
    return i, dist[i]


def brute_rmse_mm(source, inputs):
    d = np.array([brute_nearest(source, q)[1] for q in inputs])
    return float(np.sqrt(np.mean(d * d))) * 1000.0


def test_single_point_index():
    p, d = nearest_neighbor(SpatialIndex([(1.0, 2.0, 3.0)]), (0, 0, 0))
    np.testing.assert_array_equal(p, (1, 2, 3))
    assert d == pytest.approx(np.sqrt(14))


def test_query_on_indexed_point(rng):
    pts = rng.normal(size=(50, 3))
    p, d = nearest_neighbor(SpatialIndex(pts), pts[17])
    np.testing.assert_array_equal(p, pts[17])
    assert d == 0.0


def test_empty_index():
    with pytest.raises(ValueError):
        nearest_neighbor(SpatialIndex(np.zeros((0, 3))), (0, 0, 0))


def test_matches_linear_scan(rng):
    pts = rng.uniform(-1, 1, size=(1000, 3))
    queries = rng.uniform(-1.2, 1.2, size=(100, 3))
    idx, dist = SpatialIndex(pts).query(queries)
    for q, i, d in zip(queries, idx, dist):
        bi, bd = brute_nearest(pts, q)
        assert i == bi
        assert d == bd


def test_ties_go_to_lowest_index():
    # eight equidistant cube corners plus duplicates; the query sits at the center
    corners = np.array([(x, y, z) for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float)
    pts = np.concatenate([corners[::-1], corners])
    idx, dist = SpatialIndex(pts).query([(0.0, 0.0, 0.0)])
    assert idx[0] == 0
    assert dist[0] == pytest.approx(np.sqrt(3))


def test_duplicate_points_lowest_index(rng):
    base = rng.normal(size=(20, 3))
    pts = np.concatenate([base, base, base])
    idx, _ = SpatialIndex(pts).query(base + 1e-3)
    for q, i in zip(base + 1e-3, idx):
        assert i == brute_nearest(pts, q)[0]
        assert i < 20


def test_grid_ties_match_brute_force():
    g = np.arange(4, dtype=float)
    pts = np.array([(x, y, z) for x in g for y in g for z in g])
    queries = pts[:-1] + 0.5
    idx, dist = SpatialIndex(pts).query(queries)
    for q, i, d in zip(queries, idx, dist):
        assert (i, d) == brute_nearest(pts, q)


def test_rmse_identical_clouds(rng):
    c = rng.normal(size=(300, 3))
    assert rmse_n_closest(c, c).rmse == 0.0


def test_rmse_one_millimeter():
    rep = rmse_n_closest([(0.0, 0.0, 0.0)], [(0.001, 0.0, 0.0)] * 5)
    assert rep.rmse == pytest.approx(1.0, abs=1e-12)
    assert rep.n_points == 5


def test_rmse_vs_brute_force(rng):
    for _ in range(5):
        src = rng.normal(size=(400, 3))
        inp = rng.normal(size=(150, 3))
        assert rmse_n_closest(src, inp).rmse == brute_rmse_mm(src, inp)


def test_rmse_first_n_and_seeded_subsample(rng):
    src = rng.normal(size=(200, 3))
    inp = rng.normal(size=(100, 3))
    assert rmse_n_closest(src, inp, n=10).rmse == brute_rmse_mm(src, inp[:10])
    a = rmse_n_closest(src, inp, n=10, seed=3)
    b = rmse_n_closest(src, inp, n=10, seed=3)
    assert a == b and a.seed == 3 and a.n_points == 10


def test_rmse_errors(rng):
    c = rng.normal(size=(5, 3))
    with pytest.raises(ValueError):
        rmse_n_closest(np.zeros((0, 3)), c)
    with pytest.raises(ValueError):
        rmse_n_closest(c, np.zeros((0, 3)))
    with pytest.raises(ValueError):
        rmse_n_closest(c, c, n=6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rmse_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    src = rng.normal(size=(100, 3))
    inp = src + rng.normal(scale=0.01, size=src.shape)
    rot = Rotation.random(random_state=seed).as_matrix()
    t = rng.normal(size=3)
    base = rmse_n_closest(src, inp).rmse
    moved = rmse_n_closest(src @ rot.T + t, inp @ rot.T + t).rmse
    assert moved == pytest.approx(base, abs=1e-9)
