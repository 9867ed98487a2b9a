import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greedy_fields.errors import CapacityError, InfeasibleError, InvalidArgumentError
from greedy_fields.geometry import Region, min_open_tour_length, mst_length, path_length
from greedy_fields.oracle import brute_force_path
from greedy_fields.pointprocess import MarkLaw, PointConfiguration, mix_seed, sample_ppp
from greedy_fields.solver import (
    END,
    HARD_CAP,
    START,
    SolveSpec,
    default_cap,
    held_karp_path_oracle,
    max_animal_mass_bracket,
    max_diamond_path_mass,
    max_path_mass,
    solve,
)

U = MarkLaw.uniform()
BOX = ((-3.0, -3.0), (3.0, 3.0))
O = (0.0, 0.0)


def cfg_n(n, seed, half=1.0):
    rng = np.random.default_rng(seed)
    P = rng.uniform(-half, half, size=(n, 2))
    return PointConfiguration(P, rng.uniform(0.05, 1.0, n), BOX, U, seed)


def test_empty_and_single():
    empty = cfg_n(0, 0)
    assert max_path_mass(empty, SolveSpec("path", O, 5.0)).value_lower == 0
    one = PointConfiguration(np.array([[0.5, 0.0]]), np.array([2.0]), BOX, U)
    r = max_path_mass(one, SolveSpec("path", O, 1.0))
    assert r.value_lower == r.value_upper == 2.0 and r.witness == (0,) and r.exact
    assert held_karp_path_oracle(empty, SolveSpec("path", O, 5.0)).value_lower == 0
    far = PointConfiguration(np.array([[2.5, 0.0]]), np.array([2.0]), BOX, U)
    assert held_karp_path_oracle(far, SolveSpec("path", O, 1.0)).value_lower == 0


def test_spec_validation():
    with pytest.raises(InfeasibleError):
        SolveSpec("path", O, 1.0, end=(2.0, 0.0))
    with pytest.raises(InvalidArgumentError):
        SolveSpec("tree", O, 1.0)
    with pytest.raises(InvalidArgumentError):
        SolveSpec("path", O, 1.0, penalty=1.0)
    with pytest.raises(InvalidArgumentError):
        SolveSpec("path", O, 3.0, end=(1.0, 0.0), region=Region.diamond(0.5, O, (2.0, 0.0)))


def test_ten_atoms_against_subset_brute_force():
    cfg = cfg_n(10, 1)
    for spec in (SolveSpec("path", O, 3.0), SolveSpec("path", O, 3.0, end=(0.5, 0.5))):
        best = 0.0
        for r in range(1, 11):
            for sub in itertools.combinations(range(10), r):
                if min_open_tour_length(O, cfg.positions[list(sub)], spec.end) <= 3.0:
                    best = max(best, math.fsum(cfg.marks[list(sub)]))
        assert max_path_mass(cfg, spec).value_lower == best


def test_witness_is_feasible_and_consistent():
    for s in range(30):
        cfg = cfg_n(12, s, 1.5)
        spec = SolveSpec("path", O, 3.0, end=(1.0, 0.0))
        r = max_path_mass(cfg, spec)
        pts = np.vstack([O, cfg.positions[list(r.witness)], (1.0, 0.0)])
        assert path_length(pts) <= 3.0 + 1e-12
        assert r.length_used == pytest.approx(path_length(pts), abs=1e-12)
        assert r.value_lower == math.fsum(cfg.marks[list(r.witness)])


def test_diamond_examples():
    cfg = cfg_n(12, 4, 1.5)
    x, y = O, (1.5, 0.0)
    slab = max_diamond_path_mass(cfg, 1.0, x, y, 3.0)
    keep = Region.slab(x, y).contains(cfg.positions)
    assert slab.value_lower == max_path_mass(cfg.subset(keep), SolveSpec("path", x, 3.0, end=y)).value_lower
    none = PointConfiguration(np.array([[0.0, 2.0]]), np.array([1.0]), BOX, U)
    r = max_diamond_path_mass(none, 0.5, x, y, 2.0)
    assert r.value_lower == 0 and r.witness == () and r.length_used == 1.5
    d5 = max_diamond_path_mass(cfg, 0.5, x, y, 3.0)
    inside = Region.diamond(0.5, x, y).contains(cfg.positions)
    spec = SolveSpec("path", x, 3.0, end=y)
    assert d5.value_lower == brute_force_path(cfg.subset(inside), spec)


def _animal_brute(cfg, ell, relaxed=False):
    best = 0.0
    n = len(cfg)
    for r in range(1, n + 1):
        for sub in itertools.combinations(range(n), r):
            P = cfg.positions[list(sub)]
            if relaxed:
                length = mst_length(P) + float(np.min(np.linalg.norm(P, axis=1)))
            else:
                length = mst_length(np.vstack([P, [O]]))
            if length <= ell:
                best = max(best, math.fsum(cfg.marks[list(sub)]))
    return best


def test_animal_lower_against_brute_force():
    cfg = cfg_n(10, 7, 1.2)
    r = max_animal_mass_bracket(cfg, SolveSpec("animal", O, 2.0))
    assert r.value_lower == _animal_brute(cfg, 2.0)
    assert r.value_lower <= r.value_upper
    q = max_animal_mass_bracket(cfg, SolveSpec("animal", O, 2.0, penalty=0.5), lower_only=True)
    assert q.value_lower == _animal_brute(cfg, 2.0, relaxed=True)
    assert q.value_upper == math.inf


def test_animal_empty_and_edges():
    r = max_animal_mass_bracket(cfg_n(0, 0), SolveSpec("animal", O, 2.0))
    assert (r.value_lower, r.value_upper) == (0.0, 0.0)
    cfg = cfg_n(8, 2)
    r = max_animal_mass_bracket(cfg, SolveSpec("animal", O, 2.0))
    nodes = set(r.witness) | {START}
    assert len(r.edges) == len(nodes) - 1
    assert {v for e in r.edges for v in e} == nodes
    pos = {i: cfg.positions[i] for i in r.witness}
    pos[START] = np.zeros(2)
    assert sum(np.linalg.norm(pos[a] - pos[b]) for a, b in r.edges) <= 2.0 + 1e-12


def test_capacity():
    cfg = cfg_n(30, 3, 0.5)
    with pytest.raises(CapacityError):
        max_path_mass(cfg, SolveSpec("path", O, 3.0), cap=20)
    assert default_cap() == 26


def test_cap_environment(monkeypatch):
    monkeypatch.setenv("GREEDY_FIELDS_CAP", "40")
    assert default_cap() == 40
    monkeypatch.setenv("GREEDY_FIELDS_CAP", "x")
    with pytest.raises(InvalidArgumentError):
        default_cap()


def test_tie_break_lexicographic():
    # two atoms of equal mark at the same distance; only one fits
    P = np.array([[0.0, 1.0], [0.0, -1.0]])
    cfg = PointConfiguration(P, np.array([1.0, 1.0]), BOX, U)
    assert max_path_mass(cfg, SolveSpec("path", O, 1.5)).witness == (0,)


def test_held_karp_agreement():
    for s in range(200):
        cfg = cfg_n(int(np.random.default_rng(s).integers(0, 13)), mix_seed(3, s), 1.5)
        for spec in (SolveSpec("path", O, 2.5), SolveSpec("path", O, 2.5, end=(1.0, 0.5))):
            assert max_path_mass(cfg, spec).value_lower == held_karp_path_oracle(cfg, spec).value_lower


# ---------------------------------------------------------------------------
# invariants on random configurations

seeds = st.integers(0, 2**32)


def _P(cfg, spec):
    return max_path_mass(cfg, spec, cap=HARD_CAP)


def _A(cfg, spec, lower_only=False):
    return max_animal_mass_bracket(cfg, spec, cap=HARD_CAP, lower_only=lower_only)


def _D(cfg, delta, x, y, ell):
    return max_diamond_path_mass(cfg, delta, x, y, ell, cap=HARD_CAP)


@settings(max_examples=40, deadline=None)
@given(seeds, st.floats(0.5, 3.0), st.floats(0.5, 3.0))
def test_budget_monotone(seed, a, b):
    cfg = sample_ppp(BOX, U.with_intensity(0.8), seed)
    lo, hi = sorted((a, b))
    for mk in (lambda l: SolveSpec("path", O, l), lambda l: SolveSpec("path", O, max(l, 1.0), end=(1.0, 0.0))):
        assert _P(cfg, mk(lo)).value_lower <= _P(cfg, mk(hi)).value_lower
    al = _A(cfg, SolveSpec("animal", O, lo), lower_only=True).value_lower
    ah = _A(cfg, SolveSpec("animal", O, hi), lower_only=True).value_lower
    assert al <= ah


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_atom_monotonicity_and_self_bounding(seed):
    cfg = sample_ppp(BOX, U.with_intensity(0.8), seed)
    spec = SolveSpec("path", O, 2.0, end=(0.5, 0.0))
    res = _P(cfg, spec)
    v = res.value_lower
    # exact witness sums: float differences of two optima can overshoot a mark by an ulp
    ev = sum(map(Fraction, cfg.marks[list(res.witness)]), Fraction(0))
    total = Fraction(0)
    for i in range(len(cfg)):
        keep = np.ones(len(cfg), dtype=bool)
        keep[i] = False
        sub = cfg.subset(keep)
        r = _P(sub, spec)
        assert r.value_lower <= v
        ew = sum(map(Fraction, sub.marks[list(r.witness)]), Fraction(0))
        assert ev - ew <= Fraction(cfg.marks[i])
        total += ev - ew
    assert total <= ev


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(0.5, 2.0))
def test_gross_chain_and_penalty_monotone(seed, ell):
    cfg = sample_ppp(BOX, U.with_intensity(0.8), seed)
    p1 = _P(cfg, SolveSpec("path", O, ell)).value_lower
    p2 = _P(cfg, SolveSpec("path", O, 2 * ell)).value_lower
    a = _A(cfg, SolveSpec("animal", O, ell))
    assert p1 <= a.value_lower <= a.value_upper <= p2
    prev = a.value_lower
    for q in (0.1, 1.0, math.inf):
        aq = _A(cfg, SolveSpec("animal", O, ell, penalty=q), lower_only=True).value_lower
        assert p1 <= aq <= prev
        prev = aq


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_region_monotone(seed, d1, d2):
    cfg = sample_ppp(BOX, U.with_intensity(0.8), seed)
    lo, hi = sorted((d1, d2))
    x, y = O, (1.5, 0.5)
    a = _D(cfg, lo, x, y, 2.5).value_lower
    b = _D(cfg, hi, x, y, 2.5).value_lower
    c = _P(cfg, SolveSpec("path", x, 2.5, end=y)).value_lower
    assert a <= b <= c


def test_determinism():
    cfg = sample_ppp(BOX, U.with_intensity(0.5), 5)
    spec = SolveSpec("animal", O, 2.0)
    assert solve(cfg, spec) == solve(cfg, spec)
    pspec = SolveSpec("path", O, 2.0)
    assert solve(cfg, pspec) == solve(cfg, pspec)
