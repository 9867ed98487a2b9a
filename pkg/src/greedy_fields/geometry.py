"""Euclidean predicates and lengths: cones, diamonds, slabs, paths and trees.

Membership tests follow the closed-set convention: a point on the boundary of a
cone (equality in the aperture inequality) is inside. No epsilon is applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy.sparse.csgraph import minimum_spanning_tree

from ._numeric import dist, pairwise, to_point
from .errors import CapacityError, InvalidArgumentError

TOUR_CAP = 20


def as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=float).reshape(-1)
    if a.size < 1 or not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"not a finite point: {p!r}")
    return a


def as_points(points, d: Optional[int] = None) -> np.ndarray:
    a = np.asarray(points, dtype=float)
    if a.size == 0:
        return np.zeros((0, d or 2))
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError("points must be finite")
    return a


def _check_delta(delta: float) -> None:
    if not (0.0 < delta <= 1.0):
        raise InvalidArgumentError(f"aperture delta must lie in (0, 1], got {delta}")


def cone_mask(delta: float, apex, direction, Z) -> np.ndarray:
    """Vectorised cone membership for the rows of ``Z``."""
    _check_delta(delta)
    apex = as_point(apex)
    u = as_point(direction)
    nu = np.sqrt(np.sum(u * u))
    if nu == 0.0:
        raise InvalidArgumentError("cone direction must be nonzero")
    u = u / nu
    V = as_points(Z, apex.size) - apex
    lhs = V @ u
    rhs = (1.0 - delta) * np.sqrt(np.sum(V * V, axis=1))
    return lhs >= rhs


def diamond_mask(delta: float, x, y, Z) -> np.ndarray:
    x = as_point(x)
    y = as_point(y)
    if np.array_equal(x, y):
        raise InvalidArgumentError("diamond endpoints must be distinct")
    return cone_mask(delta, x, y - x, Z) & cone_mask(delta, y, x - y, Z)


def slab_mask(x, y, Z) -> np.ndarray:
    """Points between the two hyperplanes orthogonal to ``y - x`` through x and y."""
    x = as_point(x)
    y = as_point(y)
    if np.array_equal(x, y):
        raise InvalidArgumentError("slab endpoints must be distinct")
    u = y - x
    s = (as_points(Z, x.size) - x) @ u
    return (s >= 0.0) & (s <= u @ u)


def cone_contains(delta: float, apex, direction, z) -> bool:
    """Whether ``z`` lies in the closed cone of aperture ``delta`` at ``apex``.

    The cone is ``{z : <z - apex, u/|u|> >= (1 - delta) |z - apex|}``.
    """
    return bool(cone_mask(delta, apex, direction, as_point(z)[None, :])[0])


def diamond_contains(delta: float, x, y, z) -> bool:
    """Whether ``z`` lies in both cones C(x, y - x) and C(y, x - y)."""
    return bool(diamond_mask(delta, x, y, as_point(z)[None, :])[0])


@dataclass(frozen=True)
class Region:
    """Geometric constraint on which atoms a solve may use.

    ``kind`` is one of ``full``, ``cone``, ``diamond``, ``slab``. A cone stores
    its apex in ``anchor_a`` and its axis direction in ``anchor_b``; diamonds and
    slabs store both endpoints.
    """

    kind: str = "full"
    delta: float = 1.0
    anchor_a: Optional[tuple] = None
    anchor_b: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("full", "cone", "diamond", "slab"):
            raise InvalidArgumentError(f"unknown region kind {self.kind!r}")
        _check_delta(self.delta)
        if self.kind != "full":
            if self.anchor_a is None or self.anchor_b is None:
                raise InvalidArgumentError(f"{self.kind} region needs two anchors")
            a = tuple(float(v) for v in as_point(self.anchor_a))
            b = tuple(float(v) for v in as_point(self.anchor_b))
            object.__setattr__(self, "anchor_a", a)
            object.__setattr__(self, "anchor_b", b)
            if self.kind in ("diamond", "slab") and a == b:
                raise InvalidArgumentError("diamond/slab anchors must differ")
            if self.kind == "cone" and not any(b):
                raise InvalidArgumentError("cone direction must be nonzero")

    @classmethod
    def diamond(cls, delta: float, x, y) -> "Region":
        return cls("diamond", delta, tuple(as_point(x)), tuple(as_point(y)))

    @classmethod
    def slab(cls, x, y) -> "Region":
        return cls("slab", 1.0, tuple(as_point(x)), tuple(as_point(y)))

    @classmethod
    def cone(cls, delta: float, apex, direction) -> "Region":
        return cls("cone", delta, tuple(as_point(apex)), tuple(as_point(direction)))

    def contains(self, Z) -> np.ndarray:
        Z = as_points(Z)
        if self.kind == "full":
            return np.ones(len(Z), dtype=bool)
        if self.kind == "cone":
            return cone_mask(self.delta, self.anchor_a, self.anchor_b, Z)
        if self.kind == "diamond":
            return diamond_mask(self.delta, self.anchor_a, self.anchor_b, Z)
        return slab_mask(self.anchor_a, self.anchor_b, Z)


FULL = Region()


def path_length(points) -> float:
    """Total length of the polygonal line through ``points`` in order."""
    P = as_points(points)
    if len(P) == 0:
        raise InvalidArgumentError("a path needs at least one point")
    if len(P) == 1:
        return 0.0
    total = 0.0
    for a, b in zip(P[:-1], P[1:]):
        total += dist(a, b)
    return total


def mst_length(points) -> float:
    """Length of a Euclidean minimum spanning tree; 0 for at most one point."""
    # coincident points cost nothing, and scipy reads zero weights as missing edges
    P = np.unique(as_points(points), axis=0)
    if len(P) <= 1:
        return 0.0
    tree = minimum_spanning_tree(pairwise(np.ascontiguousarray(P)))
    return float(tree.sum())


@njit(cache=True)
def _open_tour(S, T, E, has_end):
    k = T.shape[0]
    if k == 0:
        return dist(S, E) if has_end else 0.0
    D = pairwise(T)
    ds = to_point(T, S)
    de = to_point(T, E)
    full = 1 << k
    dp = np.full((full, k), np.inf)
    for j in range(k):
        dp[1 << j, j] = ds[j]
    for mask in range(1, full):
        for j in range(k):
            if not (mask >> j) & 1:
                continue
            v = dp[mask, j]
            if v == np.inf:
                continue
            for nx in range(k):
                if (mask >> nx) & 1:
                    continue
                c = v + D[j, nx]
                nm = mask | (1 << nx)
                if c < dp[nm, nx]:
                    dp[nm, nx] = c
    best = np.inf
    for j in range(k):
        c = dp[full - 1, j]
        if has_end:
            c = c + de[j]
        if c < best:
            best = c
    return best


def min_open_tour_length(start, targets, end=None, cap: int = TOUR_CAP) -> float:
    """Shortest path from ``start`` through every target, ending at ``end`` if given.

    Exact Held-Karp dynamic program over (subset, last target) states.

    Raises:
        CapacityError: more than ``cap`` targets.
    """
    S = as_point(start)
    T = as_points(targets, S.size)
    if len(T) > cap:
        raise CapacityError(
            f"{len(T)} targets exceed the Held-Karp cap of {cap}; "
            "use the branch-and-bound solver instead"
        )
    has_end = end is not None
    E = as_point(end) if has_end else S
    return float(_open_tour(S, np.ascontiguousarray(T), E, has_end))


def ellipsoid_volume(d: int, ell: float, separation: float) -> float:
    """Volume of {z : |z - x| + |z - y| <= ell} for |x - y| = separation."""
    from math import gamma, pi

    unit = pi ** (d / 2) / gamma(d / 2 + 1)
    a = ell / 2.0
    b = np.sqrt(max(ell * ell - separation * separation, 0.0)) / 2.0
    return unit * a * b ** (d - 1)


def ball_volume(d: int, r: float) -> float:
    from math import gamma, pi

    return pi ** (d / 2) / gamma(d / 2 + 1) * r**d


def diamond_volume(d: int, delta: float, separation: float) -> float:
    """Volume of the diamond of aperture delta between points ``separation`` apart."""
    if delta >= 1.0:
        return float("inf")
    theta = np.arccos(1.0 - delta)
    h = separation / 2.0
    r = h * np.tan(theta)
    return 2.0 * ball_volume(d - 1, r) * h / d


def cones_interiors_disjoint(delta: float, u, v) -> bool:
    """Two aperture-``delta`` cones sharing an apex, with axes u and v, overlap only
    on a Lebesgue-null set iff the angle between the axes is at least twice the
    half-opening angle."""
    u = as_point(u)
    v = as_point(v)
    cosang = float(u @ v / (np.sqrt(u @ u) * np.sqrt(v @ v)))
    half = np.arccos(1.0 - delta)
    return np.arccos(np.clip(cosang, -1.0, 1.0)) >= 2.0 * half - 1e-12


def diamond_bounding_ball(delta: float, x, y) -> tuple:
    x = as_point(x)
    y = as_point(y)
    h = np.sqrt(np.sum((y - x) ** 2)) / 2.0
    if delta >= 1.0:
        return (x + y) / 2.0, float("inf")
    theta = np.arccos(1.0 - delta)
    return (x + y) / 2.0, h * max(1.0, float(np.tan(theta)))


def diamonds_null_overlap(delta: float, chain: Sequence) -> bool:
    """Whether consecutive diamonds along ``chain`` overlap only on null sets.

    Consecutive pieces share an endpoint and are tested exactly through their
    apex cones. Non-consecutive pieces must be separated either by bounding
    balls or, for collinear chains, by the hyperplanes orthogonal to the line.
    """
    pts = [as_point(p) for p in chain]
    k = len(pts) - 1
    for i in range(k - 1):
        a, b, c = pts[i], pts[i + 1], pts[i + 2]
        if not cones_interiors_disjoint(delta, a - b, c - b):
            return False
    direction = pts[-1] - pts[0]
    collinear = False
    if np.any(direction != 0):
        u = direction / np.sqrt(direction @ direction)
        proj = np.array([(p - pts[0]) @ u for p in pts])
        resid = max(np.sqrt(np.sum(((p - pts[0]) - ((p - pts[0]) @ u) * u) ** 2)) for p in pts)
        collinear = bool(resid <= 1e-12 * (1 + np.max(np.abs(proj))) and np.all(np.diff(proj) > 0))
    for i in range(k):
        for j in range(i + 2, k):
            if collinear:
                continue
            ci, ri = diamond_bounding_ball(delta, pts[i], pts[i + 1])
            cj, rj = diamond_bounding_ball(delta, pts[j], pts[j + 1])
            if not np.sqrt(np.sum((ci - cj) ** 2)) >= ri + rj:
                return False
    return True
