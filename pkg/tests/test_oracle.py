import math
from fractions import Fraction

import numpy as np
import pytest

from greedy_fields.errors import CapacityError, InvalidArgumentError
from greedy_fields.oracle import (
    LatticeField,
    brute_force_path,
    enumerate_lattice_animals,
    lattice_cover,
    lattice_greedy_animal,
    naive_lattice_greedy_animal,
    segment_cells,
    split_cell_identity,
)
from greedy_fields.pointprocess import MarkLaw, PointConfiguration, mix_seed, sample_ppp
from greedy_fields.solver import SolveSpec, held_karp_path_oracle, max_path_mass

U = MarkLaw.uniform()
O = (0.0, 0.0)
BOX = ((-2.0, -2.0), (2.0, 2.0))


def small_config(seed, n_max=12):
    """Configurations of at most ``n_max`` atoms: the first Poisson draws on BOX."""
    cfg = sample_ppp(BOX, U.with_intensity(0.6), seed)
    return cfg.subset(np.arange(min(len(cfg), n_max)))


def test_brute_force_trivial():
    empty = small_config(0).subset(np.zeros(0, dtype=int))
    assert brute_force_path(empty, SolveSpec("path", O, 2.0)) == 0
    one = PointConfiguration(np.array([[0.3, 0.4]]), np.array([0.7]), BOX, U)
    assert brute_force_path(one, SolveSpec("path", O, 1.0)) == 0.7
    assert brute_force_path(one, SolveSpec("path", O, 0.4)) == 0


def test_brute_force_cap():
    cfg = sample_ppp(BOX, U.with_intensity(3.0), 1)
    with pytest.raises(CapacityError):
        brute_force_path(cfg, SolveSpec("path", O, 3.0))


def test_three_way_agreement():
    for s in range(150):
        cfg = small_config(mix_seed(9, s))
        for spec in (SolveSpec("path", O, 2.5), SolveSpec("path", O, 2.5, end=(1.0, 0.0))):
            b = brute_force_path(cfg, spec)
            assert held_karp_path_oracle(cfg, spec).value_lower == b
            assert max_path_mass(cfg, spec).value_lower == b


# ---------------------------------------------------------------------------
# lattice model


def field(seed, radius=4, d=2):
    return LatticeField.sample(d, radius, U, seed)


def test_lattice_small_n():
    f = field(1)
    assert lattice_greedy_animal(f, 1) == f.mass((0, 0))
    best_nb = max(f.mass(c) for c in [(1, 0), (-1, 0), (0, 1), (0, -1)])
    assert lattice_greedy_animal(f, 2) == f.mass((0, 0)) + best_nb


def test_lattice_animal_counts():
    # connected n-cell sets containing the origin: n times the fixed polyomino counts
    f = field(2, radius=5)
    fixed = {1: 1, 2: 2, 3: 6, 4: 19, 5: 63, 6: 216}
    for n, a in fixed.items():
        animals = list(enumerate_lattice_animals(f, n))
        assert len(animals) == n * a
        assert len({frozenset(x) for x in animals}) == len(animals)
    # d = 3: 1, 3, 15, 86 fixed polycubes
    f3 = field(3, radius=3, d=3)
    for n, a in {1: 1, 2: 3, 3: 15, 4: 86}.items():
        assert sum(1 for _ in enumerate_lattice_animals(f3, n)) == n * a


def test_lattice_against_naive():
    for s in range(5):
        f = field(mix_seed(4, s))
        assert lattice_greedy_animal(f, 5) == naive_lattice_greedy_animal(f, 5)


def test_lattice_caps():
    with pytest.raises(CapacityError):
        lattice_greedy_animal(field(0), 9)
    with pytest.raises(InvalidArgumentError):
        lattice_greedy_animal(field(0), 0)
    with pytest.raises(InvalidArgumentError):
        LatticeField(2, 1, -np.ones((3, 3)))


def test_lattice_from_config():
    cfg = sample_ppp(((-3.0, -3.0), (3.0, 3.0)), U.with_intensity(2.0), 5)
    f = LatticeField.from_config(cfg, 3)
    assert math.isclose(f.masses.sum(), cfg.total_mass(), rel_tol=1e-13)


# ---------------------------------------------------------------------------
# covering


def test_segment_cells_chain():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b = rng.uniform(-5, 5, size=(2, 2))
        cells = segment_cells(a, b)
        assert cells[0] == tuple(np.floor(a).astype(int)) and cells[-1] == tuple(np.floor(b).astype(int))
        assert len(cells) == 1 + int(np.abs(np.floor(b) - np.floor(a)).sum())
        for c, e in zip(cells, cells[1:]):
            assert sum(abs(x - y) for x, y in zip(c, e)) == 1


def test_cover_empty():
    empty = small_config(0).subset(np.zeros(0, dtype=int))
    r = lattice_cover(empty, 5.0, [])
    assert r.cells == ((0, 0),) and r.cover_mass == 0 and r.dominated


def _walk(cfg, ell, rng):
    """A random feasible path from the origin through atoms."""
    pos = np.zeros(2)
    left = ell
    out = []
    free = list(range(len(cfg)))
    while free:
        d = np.linalg.norm(cfg.positions[free] - pos, axis=1)
        ok = [i for i, v in zip(free, d) if v <= left]
        if not ok:
            break
        j = ok[int(rng.integers(len(ok)))] if rng.random() < 0.5 else ok[int(np.argmin(np.linalg.norm(cfg.positions[ok] - pos, axis=1)))]
        left -= float(np.linalg.norm(cfg.positions[j] - pos))
        pos = cfg.positions[j]
        out.append(j)
        free.remove(j)
    return out


def test_cover_dominates_and_constant_bounded():
    rng = np.random.default_rng(12)
    worst = {}
    for ell in (5.0, 10.0, 20.0):
        consts = []
        for s in range(100):
            win = ((-ell, -ell), (ell, ell))
            cfg = sample_ppp(win, U, mix_seed(13, int(ell), s))
            path = _walk(cfg, ell, rng)
            r = lattice_cover(cfg, ell, [cfg.positions[i] for i in path])
            assert r.dominated
            cells = {c: sum(Fraction(float(w)) for p, w in zip(cfg.positions, cfg.marks) if tuple(np.floor(p).astype(int)) == c) for c in r.cells}
            assert sum(cells.values()) >= sum(Fraction(float(cfg.marks[i])) for i in path)
            consts.append(r.constant)
        worst[ell] = max(consts)
    # a unit-speed path meets at most about 2 sqrt(2) + 1 cells per unit length
    assert max(worst.values()) <= 6.0
    assert worst[20.0] <= 2 * worst[5.0]


def test_split_cell_identity():
    cfg = sample_ppp(((0.0, 0.0), (6.0, 6.0)), MarkLaw.pareto(1.5, 1.0, 0.5), 3)
    m = 2.0
    for c in {tuple(np.floor(p).astype(int)) for p in cfg.positions}:
        total, excess, clipped = split_cell_identity(cfg, m, c)
        inside = np.all(np.floor(cfg.positions).astype(int) == c, axis=1)
        w = cfg.marks[inside]
        assert Fraction(total) == sum(map(Fraction, w)) or math.isclose(total, math.fsum(w), rel_tol=1e-15)
        assert math.isclose(clipped + excess, total, rel_tol=1e-14)
        if inside.sum() <= 1:
            assert excess <= max(total - m, 0.0)
