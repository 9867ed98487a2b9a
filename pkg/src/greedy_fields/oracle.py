"""Independent references: exhaustive small-instance path optima and the lattice model.

Nothing here shares search code with :mod:`greedy_fields.solver`; the only
common pieces are the distance primitive and the Held-Karp tour length.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, List, Sequence, Tuple

import numpy as np

from .errors import CapacityError, InvalidArgumentError
from ._numeric import pairwise, prim_length
from .geometry import as_point, min_open_tour_length
from .pointprocess import MarkLaw, PointConfiguration, make_rng, mass_of
from .solver import SolveSpec

BRUTE_CAP = 12
LATTICE_MAX_N = 8
LATTICE_MAX_RADIUS = 6

Cell = Tuple[int, ...]


def brute_force_path(config: PointConfiguration, spec: SolveSpec, cap: int = BRUTE_CAP) -> float:
    """Exact path optimum by subset enumeration.

    Subsets are visited in decreasing exact mass; the first one whose shortest
    visiting path fits in the budget is optimal.
    """
    if spec.variant != "path":
        raise InvalidArgumentError("brute_force_path solves paths only")
    S = as_point(spec.start)
    E = as_point(spec.end) if spec.two_anchor else None
    P = config.positions
    keep = spec.region.contains(P) if len(P) else np.zeros(0, dtype=bool)
    reach = np.linalg.norm(P - S, axis=1) if len(P) else np.zeros(0)
    if E is not None and len(P):
        reach = reach + np.linalg.norm(P - E, axis=1)
    idx = [int(i) for i in np.flatnonzero(keep & (reach <= spec.budget + 1e-9 * (1 + spec.budget)))]
    if len(idx) > cap:
        raise CapacityError(f"{len(idx)} atoms exceed the brute-force cap of {cap}")
    anchors = [S] + ([E] if E is not None else [])
    # fsum is correctly rounded, hence monotone in the exact mass: ordering by it
    # and returning the first feasible subset's fsum gives the exact optimum's fsum
    subsets = []
    for r in range(1, len(idx) + 1):
        for sub in itertools.combinations(idx, r):
            subsets.append((math.fsum(config.marks[list(sub)]), sub))
    subsets.sort(key=lambda t: t[0], reverse=True)
    pts_all = np.vstack([P[idx]] + [a[None, :] for a in anchors]) if idx else np.zeros((0, len(S)))
    D = pairwise(pts_all) if idx else np.zeros((0, 0))
    local = {g: k for k, g in enumerate(idx)}
    tail = np.arange(len(idx), len(idx) + len(anchors))
    for value, sub in subsets:
        ids = np.concatenate([np.array([local[i] for i in sub]), tail])
        # a visiting path is a spanning tree of its points and anchors
        if prim_length(D, ids, len(ids)) > spec.budget:
            continue
        if min_open_tour_length(S, P[list(sub)], E, cap=cap) <= spec.budget:
            return value
    return 0.0


@dataclass(frozen=True, eq=False)
class LatticeField:
    """Nonnegative masses on the cells of [-n, n]^d, indexed by ``cell + n``."""

    dimension: int
    radius: int
    masses: np.ndarray
    seed: int = 0

    def __post_init__(self):
        M = np.asarray(self.masses, dtype=float)
        shape = (2 * self.radius + 1,) * self.dimension
        if M.shape != shape:
            raise InvalidArgumentError(f"masses must have shape {shape}")
        if np.any(M < 0) or not np.all(np.isfinite(M)):
            raise InvalidArgumentError("lattice masses must be finite and nonnegative")
        M = M.copy()
        M.setflags(write=False)
        object.__setattr__(self, "masses", M)

    @classmethod
    def sample(cls, dimension: int, radius: int, law: MarkLaw, seed: int) -> "LatticeField":
        """I.i.d. masses drawn from the normalised mark law."""
        rng = make_rng(seed)
        size = (2 * radius + 1) ** dimension
        M = law.sample_marks(rng, size).reshape((2 * radius + 1,) * dimension)
        return cls(dimension, radius, M, seed)

    @classmethod
    def from_config(cls, config: PointConfiguration, radius: int) -> "LatticeField":
        """X_v = mass of the half-open cell v + [0, 1)^d."""
        d = config.dimension
        M = np.zeros((2 * radius + 1,) * d)
        if len(config):
            cells = np.floor(config.positions).astype(np.int64)
            inside = np.all(np.abs(cells) <= radius, axis=1)
            for c, w in zip(cells[inside], config.marks[inside]):
                M[tuple(c + radius)] += w
            # recompute each occupied cell with an exact sum
            for c in {tuple(c) for c in cells[inside]}:
                lo = np.array(c, dtype=float)
                M[tuple(np.array(c) + radius)] = mass_of(config, (lo, lo + 1.0))
        return cls(d, radius, M, config.seed)

    def inside(self, cell: Cell) -> bool:
        return all(abs(c) <= self.radius for c in cell)

    def mass(self, cell: Cell) -> float:
        if not self.inside(cell):
            return 0.0
        return float(self.masses[tuple(c + self.radius for c in cell)])

    def neighbours(self, cell: Cell) -> List[Cell]:
        out = []
        for axis in range(self.dimension):
            for s in (-1, 1):
                nb = list(cell)
                nb[axis] += s
                nb = tuple(nb)
                if self.inside(nb):
                    out.append(nb)
        return out


def _check_lattice(field: LatticeField, n: int) -> None:
    if n < 1:
        raise InvalidArgumentError("animal cardinal must be at least 1")
    if n > LATTICE_MAX_N or field.radius > LATTICE_MAX_RADIUS:
        raise CapacityError(
            f"lattice enumeration is capped at n <= {LATTICE_MAX_N} and radius <= {LATTICE_MAX_RADIUS}"
        )


def enumerate_lattice_animals(field: LatticeField, n: int):
    """Yield every connected set of ``n`` cells containing the origin, once each.

    Incremental boundary expansion: a cell enters the untried frontier only the
    first time it becomes adjacent, and frontier cells are consumed in order.
    """
    _check_lattice(field, n)
    origin = (0,) * field.dimension

    def grow(current: List[Cell], untried: List[Cell], seen: FrozenSet[Cell]):
        if len(current) == n:
            yield tuple(current)
            return
        untried = list(untried)
        while untried:
            c = untried.pop(0)
            new = [nb for nb in field.neighbours(c) if nb not in seen]
            yield from grow(current + [c], untried + new, seen | set(new))

    start = field.neighbours(origin)
    yield from grow([origin], start, frozenset([origin, *start]))


def lattice_greedy_animal(field: LatticeField, n: int) -> float:
    """Maximal mass of a connected set of ``n`` lattice cells containing the origin."""
    best = -math.inf
    for animal in enumerate_lattice_animals(field, n):
        best = max(best, math.fsum(field.mass(c) for c in animal))
    return best


def _connected(cells: Sequence[Cell]) -> bool:
    cells = set(cells)
    stack = [next(iter(cells))]
    seen = {stack[0]}
    while stack:
        c = stack.pop()
        for axis in range(len(c)):
            for s in (-1, 1):
                nb = list(c)
                nb[axis] += s
                nb = tuple(nb)
                if nb in cells and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
    return len(seen) == len(cells)


def naive_lattice_greedy_animal(field: LatticeField, n: int) -> float:
    """Same optimum by testing every n-subset of the L1 ball of radius n - 1."""
    _check_lattice(field, n)
    d = field.dimension
    origin = (0,) * d
    rng_ = range(-(n - 1), n)
    ball = [c for c in itertools.product(rng_, repeat=d) if sum(map(abs, c)) <= n - 1 and field.inside(c) and c != origin]
    best = -math.inf
    for rest in itertools.combinations(ball, n - 1):
        cells = (origin,) + rest
        if _connected(cells):
            best = max(best, math.fsum(field.mass(c) for c in cells))
    return best


def segment_cells(a, b) -> List[Cell]:
    """Face-connected chain of unit cells met by the segment from a to b.

    Each step moves one axis towards the cell of ``b``, so the chain has
    ``1 + |floor(b) - floor(a)|_1`` cells.
    """
    a = as_point(a)
    b = as_point(b)
    cell = np.floor(a).astype(np.int64)
    target = np.floor(b).astype(np.int64)
    u = b - a
    out = [tuple(int(v) for v in cell)]
    while np.any(cell != target):
        best_axis, best_t = -1, math.inf
        for k in range(len(cell)):
            if cell[k] == target[k]:
                continue
            s = 1 if target[k] > cell[k] else -1
            edge = cell[k] + 1 if s > 0 else cell[k]
            t = (edge - a[k]) / u[k] if u[k] != 0 else math.inf
            if t < best_t or best_axis < 0:
                best_axis, best_t = k, t
        cell[best_axis] += 1 if target[best_axis] > cell[best_axis] else -1
        out.append(tuple(int(v) for v in cell))
    return out


@dataclass(frozen=True)
class CoverResult:
    cells: Tuple[Cell, ...]
    cover_mass: float
    witness_mass: float
    constant: float
    dominated: bool


def lattice_cover(config: PointConfiguration, ell: float, vertices, edges=None) -> CoverResult:
    """Cover a continuous animal by a lattice animal containing the origin cell.

    ``vertices`` are the animal's points (atoms or not); ``edges`` are index pairs
    into ``vertices`` and default to consecutive pairs (a path). The cover takes
    every vertex cell, every cell met by an edge, and a straight cell chain from
    the origin to the first vertex. ``constant`` is #cover / ell.
    """
    if not ell > 0:
        raise InvalidArgumentError("budget must be positive")
    d = config.dimension
    V = [as_point(v) for v in vertices]
    origin = np.zeros(d)
    cells = {(0,) * d}
    if V:
        if edges is None:
            edges = [(i, i + 1) for i in range(len(V) - 1)]
        for v in V:
            cells.add(tuple(int(c) for c in np.floor(v)))
        for i, j in edges:
            cells.update(segment_cells(V[i], V[j]))
        cells.update(segment_cells(origin, V[0]))
    cells = tuple(sorted(cells))
    X = {c: mass_of(config, (np.array(c, dtype=float), np.array(c, dtype=float) + 1.0)) for c in cells}
    cover_mass = math.fsum(X.values())
    wmask = np.zeros(len(config), dtype=bool)
    for v in V:
        hit = np.all(config.positions == v, axis=1) if len(config) else np.zeros(0, dtype=bool)
        wmask |= hit
    witness_mass = math.fsum(config.marks[wmask])
    # exact on atoms: per-cell float sums can round below the witness sum
    if len(config):
        covered = np.array([tuple(int(c) for c in np.floor(p)) in set(cells) for p in config.positions])
    else:
        covered = np.zeros(0, dtype=bool)
    exact_ok = sum(map(Fraction, config.marks[covered]), Fraction(0)) >= sum(map(Fraction, config.marks[wmask]), Fraction(0))
    return CoverResult(cells, cover_mass, witness_mass, len(cells) / ell, bool(exact_ok))


def split_cell_identity(config: PointConfiguration, m: float, cell: Cell) -> Tuple[float, float, float]:
    """(X_v, X_v of the (t - m)^+ part, X_v of the t ^ m part) for one cell."""
    from .pointprocess import split_truncate

    lo = np.array(cell, dtype=float)
    box = (lo, lo + 1.0)
    low, high = split_truncate(config, m)
    return mass_of(config, box), mass_of(high, box), mass_of(low, box)
