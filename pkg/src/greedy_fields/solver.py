"""Exact greedy path masses and certified brackets for greedy animal masses.

Paths are solved exactly by a depth-first branch and bound over atom sequences.
Animals are bracketed: the lower end is an explicit spanning-tree animal, the
upper end combines the depth-first-search doubling argument with MST <= 2 SMT.

Reported masses are ``math.fsum`` of the witness marks, so they do not depend
on the order in which a search accumulated them.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numba import njit

from ._numeric import dist, pairwise, prim_edges, prim_length, to_point
from .errors import CapacityError, InfeasibleError, InvalidArgumentError
from .geometry import FULL, Region, as_point
from .pointprocess import PointConfiguration

DEFAULT_CAP = 26
HARD_CAP = 400
HK_CAP = 20
START = -1
END = -2

# prune when the bound cannot beat the incumbent by more than float noise
_SLACK = 1e-13


def default_cap() -> int:
    """Atom cap for exact solves; ``GREEDY_FIELDS_CAP`` overrides the default."""
    raw = os.environ.get("GREEDY_FIELDS_CAP")
    if raw is None:
        return DEFAULT_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise InvalidArgumentError(f"GREEDY_FIELDS_CAP must be an integer, got {raw!r}") from exc
    if not 0 <= cap <= HARD_CAP:
        raise InvalidArgumentError(f"GREEDY_FIELDS_CAP must lie in [0, {HARD_CAP}]")
    return cap


@dataclass(frozen=True)
class SolveSpec:
    variant: str
    start: tuple
    budget: float
    end: Optional[tuple] = None
    penalty: float = 0.0
    region: Region = FULL

    def __post_init__(self):
        if self.variant not in ("path", "animal"):
            raise InvalidArgumentError(f"variant must be path or animal, got {self.variant!r}")
        s = tuple(float(v) for v in as_point(self.start))
        object.__setattr__(self, "start", s)
        if self.end is not None:
            e = tuple(float(v) for v in as_point(self.end))
            if len(e) != len(s):
                raise InvalidArgumentError("anchors must share a dimension")
            object.__setattr__(self, "end", e)
        if not (self.budget >= 0 and math.isfinite(self.budget)):
            raise InvalidArgumentError("budget must be a finite nonnegative number")
        if not self.penalty >= 0:
            raise InvalidArgumentError("penalty must lie in [0, inf]")
        if self.variant == "path" and self.penalty != 0:
            raise InvalidArgumentError("penalty applies to animals only")
        if self.end is not None:
            gap = dist(np.array(s), np.array(self.end))
            if gap > self.budget:
                raise InfeasibleError(f"budget {self.budget} is below the anchor distance {gap}")
        if self.region.kind == "diamond" and self.end is not None:
            if {self.region.anchor_a, self.region.anchor_b} != {s, self.end}:
                raise InvalidArgumentError("diamond region anchors must match the solve anchors")

    @property
    def two_anchor(self) -> bool:
        return self.end is not None


@dataclass(frozen=True)
class SolveResult:
    """Optimum (or bracket) with a witness.

    Path witnesses list atom indices in visiting order. Animal witnesses list the
    atom subset in increasing index order and ``edges`` holds tree edges whose
    endpoints are atom indices or ``START``/``END`` for the anchors.
    """

    value_lower: float
    value_upper: float
    witness: Tuple[int, ...]
    length_used: float
    nodes_explored: int
    exact: bool
    edges: Tuple[Tuple[int, int], ...] = ()


# ---------------------------------------------------------------------------
# path branch and bound


@njit(cache=True)
def _knapsack(order, cost, w, in_path, cur, DS, D, DE, has_end, used, B, R):
    ub = 0.0
    for t in range(order.shape[0]):
        j = order[t]
        if in_path[j]:
            continue
        step = DS[j] if cur < 0 else D[cur, j]
        tail = DE[j] if has_end else 0.0
        if used + step + tail > B:
            continue
        c = cost[j]
        if c <= R:
            ub += w[j]
            R -= c
        else:
            ub += w[j] * R / c
            break
    return ub


@njit(cache=True)
def _path_bnb(P, w, S, E, has_end, B, node_limit):
    n = P.shape[0]
    D = pairwise(P)
    DS = to_point(P, S)
    DE = to_point(P, E)
    cost = np.empty(n)
    for j in range(n):
        cin = DS[j]
        cout = DE[j] if has_end else np.inf
        for i in range(n):
            if i != j:
                if D[i, j] < cin:
                    cin = D[i, j]
                if D[j, i] < cout:
                    cout = D[j, i]
        cost[j] = 0.5 * (cin + cout) if has_end else cin
    dens = np.empty(n)
    for j in range(n):
        dens[j] = -w[j] / cost[j] if cost[j] > 0 else -np.inf
    order = np.argsort(dens, kind="mergesort")

    path = np.empty(n + 1, dtype=np.int64)
    ptr = np.zeros(n + 1, dtype=np.int64)
    used = np.zeros(n + 1)
    mass = np.zeros(n + 1)
    in_path = np.zeros(n, dtype=np.bool_)
    best = 0.0
    best_len = 0
    best_seq = np.empty(n, dtype=np.int64)
    best_used = dist(S, E) if has_end else 0.0
    nodes = 1
    depth = 0
    while True:
        if ptr[depth] >= n:
            if depth == 0:
                break
            depth -= 1
            in_path[path[depth]] = False
            continue
        j = ptr[depth]
        ptr[depth] = j + 1
        if in_path[j]:
            continue
        cur = path[depth - 1] if depth > 0 else -1
        nu = used[depth] + (DS[j] if cur < 0 else D[cur, j])
        if nu + (DE[j] if has_end else 0.0) > B:
            continue
        path[depth] = j
        in_path[j] = True
        depth += 1
        used[depth] = nu
        mass[depth] = mass[depth - 1] + w[j]
        ptr[depth] = 0
        nodes += 1
        if node_limit > 0 and nodes > node_limit:
            return -1.0, best_seq[:0], 0.0, nodes
        if mass[depth] > best:
            best = mass[depth]
            best_len = depth
            for t in range(depth):
                best_seq[t] = path[t]
            best_used = nu + (DE[j] if has_end else 0.0)
        R = B - nu
        ub = mass[depth] + _knapsack(order, cost, w, in_path, j, DS, D, DE, has_end, nu, B, R)
        if ub <= best + _SLACK * (1.0 + ub):
            ptr[depth] = n
    return best, best_seq[:best_len].copy(), best_used, nodes


@njit(cache=True)
def _held_karp_all(P, w, S, E, has_end, B):
    n = P.shape[0]
    full = 1 << n
    D = pairwise(P)
    DS = to_point(P, S)
    DE = to_point(P, E)
    dp = np.full((full, n), np.inf)
    for j in range(n):
        dp[1 << j, j] = DS[j]
    for mask in range(1, full):
        for j in range(n):
            if not (mask >> j) & 1:
                continue
            v = dp[mask, j]
            if v > B:
                continue
            for nx in range(n):
                if (mask >> nx) & 1:
                    continue
                c = v + D[j, nx]
                nm = mask | (1 << nx)
                if c < dp[nm, nx]:
                    dp[nm, nx] = c
    best = 0.0
    best_mask = 0
    best_used = dist(S, E) if has_end else 0.0
    for mask in range(1, full):
        length = np.inf
        for j in range(n):
            if (mask >> j) & 1:
                c = dp[mask, j] + (DE[j] if has_end else 0.0)
                if c < length:
                    length = c
        if length > B:
            continue
        m = 0.0
        for j in range(n):
            if (mask >> j) & 1:
                m += w[j]
        if m > best:
            best = m
            best_mask = mask
            best_used = length
    return best_mask, best_used, full


# ---------------------------------------------------------------------------
# animal subset search


@njit(cache=True)
def _animal_search(P, w, A, B, relaxed, node_limit):
    """Max mass over atom subsets S forming a feasible spanning-tree animal.

    Anchored (``relaxed`` false): MST(S + anchors) <= B.
    Relaxed: S empty, or MST(S) + sum over anchors of d(anchor, S) <= B.

    Subsets are generated in Prim insertion order, so partial tree lengths only
    grow. Choosing vertex j next excludes every candidate that Prim would have
    attached before j, which makes the enumeration canonical.
    """
    n = P.shape[0]
    k = A.shape[0]
    tot = n + k
    Q = np.empty((tot, P.shape[1]))
    for i in range(n):
        Q[i] = P[i]
    for a in range(k):
        Q[n + a] = A[a]
    D = pairwise(Q)
    # vertices: atoms 0..n-1, anchors n..n+k-1; mandatory = anchors after the root
    wt = np.zeros(tot)
    for i in range(n):
        wt[i] = w[i]
    depth_cap = tot + 2
    status = np.zeros((depth_cap, tot), dtype=np.int8)  # 0 free, 1 in tree, 2 excluded
    attach = np.full((depth_cap, tot), np.inf)
    da = np.full((depth_cap, k), np.inf)
    used = np.zeros(depth_cap)
    mass = np.zeros(depth_cap)
    order = np.zeros((depth_cap, tot), dtype=np.int64)
    ncand = np.zeros(depth_cap, dtype=np.int64)
    ptr = np.zeros(depth_cap, dtype=np.int64)
    cost = np.empty(tot)
    dens = np.empty(tot)
    tmp = np.empty(tot)
    tmpi = np.empty(tot, dtype=np.int64)
    best = 0.0
    best_set = np.zeros(n, dtype=np.bool_)
    best_len = 0.0
    nodes = 1

    # level 0
    if relaxed:
        for a in range(k):
            status[0, n + a] = 2
        # root children: first (smallest-index) atom of S, any atom
        m0 = 0
        for i in range(n):
            order[0, m0] = i
            m0 += 1
        ncand[0] = m0
    else:
        status[0, n] = 1
        for v in range(tot):
            attach[0, v] = D[n, v]
        attach[0, n] = np.inf
    depth = 0
    fresh = not relaxed
    while True:
        if fresh:
            fresh = False
            # evaluate the current tree
            feasible = True
            for a in range(1, k):
                if not relaxed and status[depth, n + a] != 1:
                    feasible = False
            L = used[depth]
            if relaxed:
                for a in range(k):
                    L += da[depth, a]
            if feasible and L <= B and mass[depth] > best:
                best = mass[depth]
                best_len = L
                for i in range(n):
                    best_set[i] = status[depth, i] == 1
            # candidate costs and bound
            R = B - used[depth]
            lb_anchor = 0.0
            if relaxed:
                for a in range(k):
                    c = da[depth, a]
                    for v in range(n):
                        if status[depth, v] == 0 and D[n + a, v] < c:
                            c = D[n + a, v]
                    lb_anchor += c
            m = 0
            forced = 0.0
            for v in range(tot):
                if status[depth, v] != 0:
                    continue
                c = attach[depth, v]
                for u in range(tot):
                    if u != v and status[depth, u] == 0 and D[u, v] < c:
                        c = D[u, v]
                cost[v] = c
                if v >= n:
                    forced += c
                else:
                    tmp[m] = v
                    dens[m] = -wt[v] / c if c > 0 else -np.inf
                    m += 1
            ub = mass[depth]
            Rk = R - forced - lb_anchor
            if Rk < 0:
                ub = -1.0
            else:
                srt = np.argsort(dens[:m], kind="mergesort")
                for t in range(m):
                    v = np.int64(tmp[srt[t]])
                    c = cost[v]
                    if c <= Rk:
                        ub += wt[v]
                        Rk -= c
                    else:
                        ub += wt[v] * Rk / c
                        break
            if ub <= best + _SLACK * (1.0 + abs(ub)):
                ncand[depth] = 0
            else:
                # children in Prim order: ascending attach distance, index tie-break
                m = 0
                for v in range(tot):
                    if status[depth, v] == 0 and attach[depth, v] <= R:
                        tmp[m] = attach[depth, v]
                        order[depth, m] = v
                        m += 1
                srt = np.argsort(tmp[:m], kind="mergesort")
                for t in range(m):
                    tmpi[t] = order[depth, srt[t]]
                for t in range(m):
                    order[depth, t] = tmpi[t]
                ncand[depth] = m
            ptr[depth] = 0
        if ptr[depth] >= ncand[depth]:
            if depth == 0:
                break
            depth -= 1
            continue
        t = ptr[depth]
        ptr[depth] = t + 1
        j = order[depth, t]
        # siblings before j become excluded in this child; a mandatory one ends the level
        if not (relaxed and depth == 0):
            if t > 0 and order[depth, t - 1] >= n:
                ncand[depth] = 0
                continue
        nodes += 1
        if node_limit > 0 and nodes > node_limit:
            return -1.0, best_set, 0.0, nodes
        c1 = depth + 1
        for v in range(tot):
            status[c1, v] = status[depth, v]
        for s in range(t):
            status[c1, order[depth, s]] = 2
        status[c1, j] = 1
        if relaxed and depth == 0:
            used[c1] = 0.0
            for v in range(tot):
                attach[c1, v] = D[j, v]
            for a in range(k):
                da[c1, a] = D[n + a, j]
        else:
            used[c1] = used[depth] + attach[depth, j]
            for v in range(tot):
                x = attach[depth, v]
                if D[j, v] < x:
                    x = D[j, v]
                attach[c1, v] = x
            for a in range(k):
                x = da[depth, a]
                if D[n + a, j] < x:
                    x = D[n + a, j]
                da[c1, a] = x
        attach[c1, j] = np.inf
        mass[c1] = mass[depth] + wt[j]
        depth = c1
        fresh = True
    return best, best_set, best_len, nodes



# ---------------------------------------------------------------------------
# public entry points


def _filter(config: PointConfiguration, spec: SolveSpec, budget: float):
    """Indices of atoms that could belong to a feasible object, in index order."""
    P = config.positions
    if len(P) == 0:
        return np.zeros(0, dtype=np.int64)
    keep = spec.region.contains(P)
    S = np.array(spec.start)
    ds = to_point(np.ascontiguousarray(P), S)
    if spec.end is None:
        keep &= ds <= budget
    else:
        E = np.array(spec.end)
        de = to_point(np.ascontiguousarray(P), E)
        if spec.variant == "path":
            keep &= ds + de <= budget
        else:
            # any tree through x, y and z is at least half the triangle perimeter
            keep &= 0.5 * (ds + de + dist(S, E)) <= budget
    return np.flatnonzero(keep)


def _check_cap(n: int, cap: Optional[int]) -> int:
    cap = default_cap() if cap is None else cap
    if cap > HARD_CAP:
        raise InvalidArgumentError(f"cap above the hard limit {HARD_CAP}")
    if n > cap:
        raise CapacityError(
            f"{n} candidate atoms exceed the exact-solve cap of {cap}; "
            "shrink the budget or intensity, or raise GREEDY_FIELDS_CAP"
        )
    return cap


def _path_solve(config: PointConfiguration, spec: SolveSpec, budget: float, cap: Optional[int], node_limit: int = 0):
    keep = _filter(config, spec, budget)
    _check_cap(len(keep), cap)
    P = np.ascontiguousarray(config.positions[keep]) if len(keep) else np.zeros((0, len(spec.start)))
    w = np.ascontiguousarray(config.marks[keep])
    S = np.array(spec.start)
    E = np.array(spec.end) if spec.two_anchor else S
    best, seq, used, nodes = _path_bnb(P, w, S, E, spec.two_anchor, float(budget), node_limit)
    if best < 0:
        raise CapacityError(f"branch and bound exceeded {node_limit} nodes")
    witness = tuple(int(keep[i]) for i in seq)
    return witness, float(used), int(nodes)


def max_path_mass(config: PointConfiguration, spec: SolveSpec, cap: Optional[int] = None) -> SolveResult:
    """Exact maximal mass of a path from the start anchor (to the end anchor, if any)
    with length at most the budget, using only atoms inside ``spec.region``.

    Ties are broken towards the lexicographically smallest atom-index sequence.
    """
    if spec.variant != "path":
        raise InvalidArgumentError("max_path_mass needs variant='path'")
    witness, used, nodes = _path_solve(config, spec, spec.budget, cap)
    value = math.fsum(config.marks[list(witness)]) if witness else 0.0
    return SolveResult(value, value, witness, used, nodes, True)


def max_diamond_path_mass(config: PointConfiguration, delta: float, x, y, budget: float, cap: Optional[int] = None) -> SolveResult:
    """Two-anchor path optimum over the atoms of the diamond between x and y."""
    x = tuple(as_point(x))
    y = tuple(as_point(y))
    if x == y:
        raise InvalidArgumentError("diamond endpoints must be distinct")
    spec = SolveSpec("path", x, budget, end=y, region=Region.diamond(delta, x, y))
    return max_path_mass(config, spec, cap)


def held_karp_path_oracle(config: PointConfiguration, spec: SolveSpec, cap: int = HK_CAP) -> SolveResult:
    """Independent path optimum from a global (subset, last atom) dynamic program."""
    if spec.variant != "path":
        raise InvalidArgumentError("the Held-Karp oracle solves paths only")
    keep = _filter(config, spec, spec.budget)
    if len(keep) > cap:
        raise CapacityError(f"{len(keep)} atoms exceed the Held-Karp oracle cap of {cap}")
    P = np.ascontiguousarray(config.positions[keep]) if len(keep) else np.zeros((0, len(spec.start)))
    w = np.ascontiguousarray(config.marks[keep])
    S = np.array(spec.start)
    E = np.array(spec.end) if spec.two_anchor else S
    mask, used, states = _held_karp_all(P, w, S, E, spec.two_anchor, float(spec.budget))
    subset = tuple(int(keep[i]) for i in range(len(keep)) if (mask >> i) & 1)
    value = math.fsum(config.marks[list(subset)]) if subset else 0.0
    return SolveResult(value, value, subset, float(used), int(states), True)


def _animal_solve(config, spec: SolveSpec, budget: float, relaxed: bool, cap, node_limit: int = 0):
    keep = _filter(config, spec, budget)
    _check_cap(len(keep), cap)
    d = len(spec.start)
    P = np.ascontiguousarray(config.positions[keep]) if len(keep) else np.zeros((0, d))
    w = np.ascontiguousarray(config.marks[keep])
    anchors = [spec.start] + ([spec.end] if spec.two_anchor else [])
    A = np.array(anchors, dtype=float)
    best, chosen, length, nodes = _animal_search(P, w, A, float(budget), relaxed, node_limit)
    if best < 0:
        raise CapacityError(f"animal search exceeded {node_limit} nodes")
    local = np.flatnonzero(chosen)
    subset = tuple(int(keep[i]) for i in local)
    return subset, float(length), int(nodes)


def _tree_edges(config, spec: SolveSpec, subset, relaxed: bool):
    if not subset:
        return ()
    anchors = [spec.start] + ([spec.end] if spec.two_anchor else [])
    labels = list(subset)
    pts = [config.positions[i] for i in subset]
    if not relaxed:
        labels += [START, END][: len(anchors)]
        pts += [np.array(a) for a in anchors]
    Q = np.ascontiguousarray(np.array(pts, dtype=float))
    D = pairwise(Q)
    e = prim_edges(D, np.arange(len(Q), dtype=np.int64), len(Q))
    edges = [tuple(sorted((labels[a], labels[b]))) for a, b in e]
    if relaxed:
        # anchors hang off their nearest subset atom
        for lab, a in zip([START, END], anchors):
            da = to_point(Q, np.array(a))
            edges.append((lab, labels[int(np.argmin(da))]))
    return tuple(sorted(edges))


def max_animal_mass_bracket(
    config: PointConfiguration,
    spec: SolveSpec,
    cap: Optional[int] = None,
    lower_only: bool = False,
) -> SolveResult:
    """Certified bracket for A(l), A_{x,y}(l) or A^(q)(l).

    The lower end is the best atom subset whose spanning tree (with the anchors for
    q = 0, or with relaxed anchoring for q > 0) fits in the budget. The upper end is
    the path optimum at 2l (equal to min(P(2l), MST optimum at 2l)). With ``lower_only`` the
    upper end is reported as ``inf``.
    """
    if spec.variant != "animal":
        raise InvalidArgumentError("max_animal_mass_bracket needs variant='animal'")
    relaxed = spec.penalty > 0
    subset, length, nodes = _animal_solve(config, spec, spec.budget, relaxed, cap)
    lower = math.fsum(config.marks[list(subset)]) if subset else 0.0
    edges = _tree_edges(config, spec, subset, relaxed)
    if lower_only:
        return SolveResult(lower, math.inf, subset, length, nodes, False, edges)
    # min(P(2l), anchored MST optimum at 2l) is always P(2l): every path is a
    # spanning tree of its atoms and anchors, so the MST optimum is never smaller
    double = 2.0 * spec.budget
    pspec = SolveSpec("path", spec.start, double, end=spec.end, region=spec.region)
    pw, _, n1 = _path_solve(config, pspec, double, cap)
    upper = math.fsum(config.marks[list(pw)]) if pw else 0.0
    return SolveResult(lower, upper, subset, length, nodes + n1, lower == upper, edges)


def solve(config: PointConfiguration, spec: SolveSpec, cap: Optional[int] = None) -> SolveResult:
    if spec.variant == "path":
        return max_path_mass(config, spec, cap)
    return max_animal_mass_bracket(config, spec, cap)
