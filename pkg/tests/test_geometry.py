import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greedy_fields.errors import CapacityError, InvalidArgumentError
from greedy_fields.geometry import (
    Region,
    ball_volume,
    cone_contains,
    diamond_contains,
    diamond_mask,
    diamond_volume,
    diamonds_null_overlap,
    ellipsoid_volume,
    min_open_tour_length,
    mst_length,
    path_length,
    slab_mask,
)

coord = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
point2 = st.tuples(coord, coord)
aperture = st.floats(0.01, 1.0)


def test_cone_examples():
    assert cone_contains(0.3, (0, 0), (1, 0), (2, 0))
    assert not cone_contains(0.5, (0, 0), (1, 0), (0, 1))
    assert not cone_contains(1.0, (0, 0), (1, 0), (-0.1, 5))
    assert cone_contains(1.0, (0, 0), (1, 0), (0.1, 5))


def test_cone_boundary_is_closed():
    # z on the boundary ray at angle acos(1 - delta) with delta = 0.5
    z = (math.cos(math.pi / 3) * 2, math.sin(math.pi / 3) * 2)
    assert cone_contains(0.5, (0, 0), (1, 0), (1.0, 0.0)) and cone_contains(1.0, (0, 0), (1, 0), (0.0, 3.0))
    assert cone_contains(0.5, (0, 0), (1, 0), (z[0] + 1e-12, z[1]))


def test_diamond_examples():
    assert diamond_contains(1.0, (0, 0), (1, 0), (0.5, 7))
    assert not diamond_contains(0.1, (0, 0), (1, 0), (0.5, 0.5))
    for delta in (0.05, 0.5, 1.0):
        assert diamond_contains(delta, (0, 0), (1, 2), (0, 0))
        assert diamond_contains(delta, (0, 0), (1, 2), (1, 2))


def test_invalid_aperture():
    with pytest.raises(InvalidArgumentError):
        cone_contains(0.0, (0, 0), (1, 0), (1, 0))
    with pytest.raises(InvalidArgumentError):
        diamond_contains(1.5, (0, 0), (1, 0), (1, 0))


@given(aperture, point2, point2, point2)
def test_diamond_symmetry(delta, x, y, z):
    if x == y:
        return
    assert diamond_contains(delta, x, y, z) == diamond_contains(delta, y, x, z)


@given(aperture, aperture, point2, point2, point2)
def test_membership_monotone_in_delta(d1, d2, x, y, z):
    if x == y:
        return
    lo, hi = sorted((d1, d2))
    if diamond_contains(lo, x, y, z):
        assert diamond_contains(hi, x, y, z)
    if cone_contains(lo, x, np.subtract(y, x), z):
        assert cone_contains(hi, x, np.subtract(y, x), z)


def test_slab_consistency_vectorised():
    rng = np.random.default_rng(3)
    for _ in range(100):
        x, y = rng.uniform(-2, 2, size=(2, 2))
        Z = rng.uniform(-4, 4, size=(100, 2))
        u = y - x
        ref = (Z - x) @ u >= 0
        ref &= (Z - x) @ u <= u @ u
        got = diamond_mask(1.0, x, y, Z)
        # the two closed half-space tests agree up to rounding of the reflected product
        near = np.abs((Z - x) @ u - u @ u) < 1e-12
        assert np.array_equal(got[~near], ref[~near])
        assert np.array_equal(slab_mask(x, y, Z)[~near], ref[~near])


def test_path_length_examples():
    assert path_length([(0, 0)]) == 0
    assert path_length([(0, 0), (1, 0), (1, 1)]) == 2
    assert path_length([(0, 0), (3, 4)]) == 5


@given(st.lists(point2, min_size=2, max_size=8), st.floats(0, 2 * math.pi), point2)
def test_path_length_invariance(pts, theta, shift):
    P = np.array(pts)
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    a = path_length(P)
    b = path_length(P @ R.T + np.array(shift))
    assert b == pytest.approx(a, rel=1e-12, abs=1e-10)


def _tree_length_by_pruefer(P):
    n = len(P)
    best = math.inf
    for seq in itertools.product(range(n), repeat=n - 2):
        degree = [1] * n
        for v in seq:
            degree[v] += 1
        total = 0.0
        for v in seq:
            leaf = min(i for i in range(n) if degree[i] == 1)
            total += np.linalg.norm(P[leaf] - P[v])
            degree[leaf] -= 1
            degree[v] -= 1
        u, w = [i for i in range(n) if degree[i] == 1]
        total += np.linalg.norm(P[u] - P[w])
        best = min(best, total)
    return best


def test_mst_examples():
    assert mst_length(np.zeros((0, 2))) == 0
    assert mst_length([(1, 1)]) == 0
    assert mst_length([(0, 0), (1, 0), (2, 0)]) == 2


def test_mst_matches_all_spanning_trees():
    P = np.random.default_rng(6).uniform(0, 1, size=(6, 2))
    assert mst_length(P) == pytest.approx(_tree_length_by_pruefer(P), rel=1e-12)


def test_open_tour_examples():
    assert min_open_tour_length((0, 0), np.zeros((0, 2))) == 0
    assert min_open_tour_length((0, 0), [(1, 0), (2, 0)]) == 2
    assert min_open_tour_length((0, 0), [(1, 0)], end=(0, 0)) == 2


def test_open_tour_matches_permutations():
    rng = np.random.default_rng(8)
    T = rng.uniform(-1, 1, size=(8, 2))
    S = np.zeros(2)
    best = min(path_length(np.vstack([S, T[list(p)]])) for p in itertools.permutations(range(8)))
    assert min_open_tour_length(S, T) == pytest.approx(best, rel=1e-12)
    E = np.array([0.5, 0.5])
    best_e = min(path_length(np.vstack([S, T[list(p)], E])) for p in itertools.permutations(range(8)))
    assert min_open_tour_length(S, T, E) == pytest.approx(best_e, rel=1e-12)


def test_open_tour_cap():
    with pytest.raises(CapacityError):
        min_open_tour_length((0, 0), np.ones((5, 2)) * np.arange(5)[:, None], cap=4)


@settings(max_examples=60)
@given(st.lists(point2, min_size=1, max_size=7), point2)
def test_tree_tour_sandwich(pts, start):
    T = np.array(pts)
    S = np.array(start)
    tour = min_open_tour_length(S, T)
    ds = float(np.min(np.linalg.norm(T - S, axis=1)))
    assert mst_length(T) <= tour + 1e-9
    assert tour <= 2 * mst_length(T) + ds + 1e-9


def test_volumes():
    assert ball_volume(2, 1.0) == pytest.approx(math.pi)
    assert ball_volume(3, 2.0) == pytest.approx(4 / 3 * math.pi * 8)
    # sep = 0 gives the ball of radius ell / 2
    assert ellipsoid_volume(2, 4.0, 0.0) == pytest.approx(ball_volume(2, 2.0))
    # aperture 1/2: two cones of half-angle 60 degrees, a rhombus of diagonals 2 and 2 tan 60
    assert diamond_volume(2, 0.5, 2.0) == pytest.approx(2 * math.tan(math.pi / 3))


def test_region_and_null_overlap():
    r = Region.diamond(0.5, (0, 0), (2, 0))
    assert r.contains(np.array([[1.0, 0.5], [1.0, 2.0]])).tolist() == [True, False]
    assert Region().contains(np.array([[9.0, 9.0]])).tolist() == [True]
    chain = [(0, 0), (1, 0), (2, 0), (3, 0)]
    assert diamonds_null_overlap(0.5, chain)
    assert not diamonds_null_overlap(0.5, [(0, 0), (1, 0), (0.5, 0.1)])
