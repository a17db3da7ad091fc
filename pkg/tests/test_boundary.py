import numpy as np
import pytest
from hypothesis import given, strategies as st
from shapely.geometry import MultiPoint, Point, Polygon

from isakit.boundary import (BoundaryError, boundary_polygon, compute_boundary, feature_bounds, occupancy,
                             prune_vertices, vertex_masks)


def test_feature_bounds_example():
    hi, lo, degenerate = feature_bounds(np.array([[-1.0, 0.0, 2.0]]))
    assert hi[0] == 2.0 and lo[0] == -1.0 and degenerate == ()


def test_constant_feature_is_degenerate():
    _, _, degenerate = feature_bounds(np.array([[1.0, 2.0], [3.0, 3.0]]))
    assert degenerate == (1,)


def test_vertex_count_and_order():
    S = vertex_masks(9)
    assert S.shape == (9, 512)
    assert len({tuple(c) for c in S.T}) == 512
    S2 = vertex_masks(2)
    # canonical binary order: LL, LU, UL, UU
    assert S2.T.tolist() == [[False, False], [False, True], [True, False], [True, True]]


def test_too_many_features_refused():
    with pytest.raises(BoundaryError, match="2\\^21"):
        vertex_masks(21)


def test_positive_correlation_removes_mixed_vertices():
    S = prune_vertices(vertex_masks(2), np.array([[1, 0.9], [0.9, 1]]))
    assert S.T.tolist() == [[False, False], [True, True]]


def test_negative_correlation_removes_matching_vertices():
    S = prune_vertices(vertex_masks(2), np.array([[1, -0.9], [-0.9, 1]]))
    assert S.T.tolist() == [[False, True], [True, False]]


def test_weak_correlation_removes_nothing():
    S = prune_vertices(vertex_masks(3), np.eye(3) + 0.5 * (1 - np.eye(3)))
    assert S.shape[1] == 8


def test_threshold_one_only_prunes_perfect_correlation():
    rho = np.array([[1, 0.99], [0.99, 1]])
    assert prune_vertices(vertex_masks(2), rho, threshold=1.0).shape[1] == 4


@pytest.mark.parametrize("t", [0.0, -0.1, 1.5])
def test_threshold_out_of_range(t):
    with pytest.raises(BoundaryError, match="threshold"):
        prune_vertices(vertex_masks(2), np.eye(2), threshold=t)


def test_any_offending_pair_removes_vertex():
    # a~b positive, b~c negative: survivors must satisfy both rules
    rho = np.array([[1, 0.9, 0.0], [0.9, 1, -0.9], [0.0, -0.9, 1]])
    S = prune_vertices(vertex_masks(3), rho)
    for a, b, c in S.T:
        assert a == b and b != c
    assert S.shape[1] == 2


@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.integers(0, 2 ** 31 - 1))
def test_pruning_is_monotone_in_threshold(t1, t2, seed):
    lo, hi = sorted((t1, t2))
    rng = np.random.default_rng(seed)
    R = rng.uniform(-1, 1, (4, 4))
    rho = (R + R.T) / 2
    np.fill_diagonal(rho, 1.0)
    S = vertex_masks(4)
    kept_lo = {tuple(c) for c in prune_vertices(S, rho, lo).T}
    kept_hi = {tuple(c) for c in prune_vertices(S, rho, hi).T}
    assert kept_lo <= kept_hi


def test_identity_projection_gives_rectangle():
    F = np.array([[0.0, 2.0, 1.0], [1.0, 3.0, 2.0]])
    b = compute_boundary(F, np.eye(2), np.eye(2))
    assert b.hull.tolist() == [[0.0, 1.0], [2.0, 1.0], [2.0, 3.0], [0.0, 3.0]]
    assert b.polygon.area == pytest.approx(4.0)
    assert b.pruned_count == 0


def test_hull_is_counter_clockwise_from_smallest_point(rng):
    V = rng.standard_normal((3, 8))
    hull = boundary_polygon(V, rng.standard_normal((2, 3)))
    assert Polygon(hull).exterior.is_ccw
    assert tuple(hull[0]) == min(map(tuple, hull))


def test_too_few_survivors_suggest_higher_threshold():
    with pytest.raises(BoundaryError, match="higher pruning threshold"):
        boundary_polygon(np.array([[0.0, 1.0], [0.0, 1.0]]), np.eye(2))


def test_collinear_projection_is_reported():
    V = vertex_masks(2).astype(float)
    with pytest.raises(BoundaryError, match="collinear"):
        boundary_polygon(V, np.array([[1.0, 0.0], [2.0, 0.0]]))


def test_unpruned_hull_contains_every_instance():
    rng = np.random.default_rng(21)
    for _ in range(20):
        n, i = int(rng.integers(2, 7)), int(rng.integers(10, 200))
        F = rng.standard_normal((n, i)) * rng.uniform(0.5, 3, (n, 1))
        A = rng.standard_normal((2, n))
        b = compute_boundary(F, A, np.eye(n), prune=False)
        poly = b.polygon.buffer(1e-9)
        Z = A @ F
        assert all(poly.covers(Point(*z)) for z in Z.T)
        assert occupancy(b, Z) <= 1.0 + 1e-12


def test_pruned_hull_is_inside_unpruned(rng):
    F = rng.standard_normal((4, 100))
    F[1] = F[0] + 0.1 * rng.standard_normal(100)
    A = rng.standard_normal((2, 4))
    rho = np.corrcoef(F)
    full = compute_boundary(F, A, rho, prune=False)
    pruned = compute_boundary(F, A, rho, threshold=0.7)
    assert pruned.pruned_count > 0
    assert pruned.polygon.area <= full.polygon.area + 1e-9
    assert full.polygon.buffer(1e-9).covers(pruned.polygon)


def test_occupancy_of_full_square_is_one():
    F = np.array([[0.0, 1, 1, 0], [0.0, 0, 1, 1]])
    b = compute_boundary(F, np.eye(2), np.eye(2))
    assert occupancy(b, F) == pytest.approx(1.0)
    assert MultiPoint([tuple(p) for p in b.hull]).convex_hull.area == pytest.approx(1.0)
