import json
import math

import numpy as np
import pytest

from greedy_fields.errors import InvalidArgumentError
from greedy_fields.estimators import h
from greedy_fields.pointprocess import MarkLaw, PointConfiguration, experiment_window, mix_seed, sample_ppp
from greedy_fields.properties import (
    CheckReport,
    check_bk_decomposition,
    check_concatenation,
    check_concentration_pen,
    check_concentration_unpen,
    check_corridor,
    check_gross_bounds,
    check_self_bounding,
    corridor_rows,
    merge,
    pen_bound,
    unpen_bound,
)

U = MarkLaw.uniform()
WIN = ((-4.0, -4.0), (8.0, 4.0))


def empty():
    return sample_ppp(WIN, U.with_intensity(0.0), 0)


def test_report_json_is_stable():
    r = CheckReport("x", 3, 0, -0.5, details=(("a", 1.0),))
    assert r.to_json() == CheckReport("x", 3, 0, -0.5, details=(("a", 1.0),)).to_json()
    d = json.loads(r.to_json())
    assert list(d) == ["name", "instances", "violations", "worst_slack", "sigma", "passed", "hard_failure", "warnings", "details"]
    m = merge("x", [r, CheckReport("x", 2, 1, 0.1, passed=False, hard_failure=True)])
    assert (m.instances, m.violations, m.passed, m.hard_failure) == (5, 1, False, True)


def test_concatenation_trivial_and_errors():
    r = check_concatenation(empty(), 0.5, [(0, 0), (2, 0)], [3.0])
    assert r.passed and r.worst_slack == 0
    cfg = sample_ppp(WIN, U.with_intensity(0.5), 3)
    # k = 1 with the same diamond outside: equality
    r = check_concatenation(cfg, 0.5, [(0, 0), (2, 0)], [3.0], outer_delta=0.5)
    assert r.passed and r.worst_slack == 0
    with pytest.raises(InvalidArgumentError):
        check_concatenation(cfg, 0.5, [(0, 0), (2, 0), (1, 0.1)], [2.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        check_concatenation(cfg, 0.5, [(0, 0), (2, 0)], [2.0, 2.0])


def test_concatenation_seeded():
    reps = []
    for s in range(40):
        cfg = sample_ppp(WIN, U.with_intensity(0.5), mix_seed(31, s))
        reps.append(check_concatenation(cfg, 0.5, [(0, 0), (1.5, 0), (3, 0), (4.5, 0)], [2.0] * 3))
    assert merge("concatenation", reps).violations == 0


def test_corridor_geometry():
    rows, N, step = corridor_rows(0.3, 0.6, 2.0, 15.0)
    assert len(rows) == 2 and N == 3
    assert step == pytest.approx(1.5)
    with pytest.raises(InvalidArgumentError):
        corridor_rows(0.3, 0.6, 10.0, 15.0)
    with pytest.raises(InvalidArgumentError):
        corridor_rows(0.9, 0.5, 2.0, 15.0)
    # single row, single diamond
    rows, N, _ = corridor_rows(0.3, 0.5, 2.0, 4.0)
    assert len(rows) == 1 and N == 1


def test_corridor_trivial_and_seeded():
    assert check_corridor(empty(), 0.3, 0.6, 2.0, 15.0).passed
    reps = []
    for s in range(15):
        cfg = sample_ppp(experiment_window(15.0, 0.3), U.with_intensity(0.1), mix_seed(32, s))
        reps.append(check_corridor(cfg, 0.3, 0.6, 2.0, 15.0))
    assert merge("corridor", reps).violations == 0


def test_self_bounding():
    assert check_self_bounding(empty(), 2.0).instances == 1
    one = PointConfiguration(np.array([[0.5, 0.0]]), np.array([0.7]), WIN, U)
    r = check_self_bounding(one, 2.0)
    assert r.passed
    # removing the single atom drops P by its mark: the <= m slack is 0.7 - 1
    assert r.worst_slack == 0.0
    with pytest.raises(InvalidArgumentError):
        check_self_bounding(sample_ppp(WIN, MarkLaw.exponential(1.0, intensity=0.2), 1), 2.0)
    reps = [check_self_bounding(sample_ppp(WIN, U.with_intensity(0.3), mix_seed(33, s)), 2.5) for s in range(30)]
    assert merge("self_bounding", reps).violations == 0


def test_gross_bounds_seeded():
    reps = [check_gross_bounds(sample_ppp(WIN, U.with_intensity(0.5), mix_seed(34, s)), 2.0) for s in range(30)]
    assert merge("gross_bounds", reps).violations == 0


def test_bound_formulas():
    assert unpen_bound(1.0, 1.0, 1.0) == 1.0
    assert unpen_bound(2.0, 1.0, 1.0) == pytest.approx(math.exp(-h(1.0)))
    assert pen_bound(0.0, 3.0, 1.0, 0.5, 1.0) >= 1.0
    # in alpha the first term falls and the second rises
    alphas = [0.25, 0.5, 1, 2, 4, 8, 16, 64]
    first = [math.exp(-h(a) * 3.0) for a in alphas]
    second = [pen_bound(2.0, 3.0, a, 0.5, 1.0) - f for a, f in zip(alphas, first)]
    assert all(b < a for a, b in zip(first, first[1:]))
    assert all(b > a for a, b in zip(second, second[1:]))
    # alpha -> infinity: the first term vanishes and the second tends to 1
    assert pen_bound(2.0, 3.0, 1e6, 0.5, 1.0) == pytest.approx(1.0, abs=1e-5)


def test_concentration_trivial():
    vals = np.array([1.0, 2.0, 3.0, 2.0])
    r = check_concentration_unpen(U, 0.0, 4.0, [0.0, 1e6], 4, 0, values=vals)
    assert r.passed
    d = dict(r.details)
    assert d["bound[0]"] == 1.0 and d["p_hat[1]"] == 0.0
    with pytest.raises(InvalidArgumentError):
        check_concentration_unpen(MarkLaw.pareto(2.5), 0.0, 4.0, [1.0], 10, 0)
    with pytest.raises(InvalidArgumentError):
        check_concentration_pen(U, math.inf, 1.0, 0.0, 4.0, [1.0], 10, 0)


def test_concentration_small_runs():
    law = U.with_intensity(0.2)
    r = check_concentration_unpen(law, 0.0, 5.0, [0.5, 1.0], 500, 7)
    assert r.passed and r.instances == 500
    p = check_concentration_pen(MarkLaw.dirac(1.0, 0.2), 0.5, 1.0, 0.0, 4.0, [0.0, 0.5, 1.0], 300, 8, upper_warnings=True)
    assert p.passed and dict(p.details)["bound[0]"] >= 1.0


def test_bk():
    r = check_bk_decomposition(4.0, U.with_intensity(0.5), 0.0, 200, 9)
    d = dict(r.details)
    assert d["p_hat[0]"] == 1.0 and d["bound[0]"] >= 1.0 and r.passed
    z = check_bk_decomposition(4.0, U.with_intensity(0.0), 0.5, 100, 9)
    assert dict(z.details)["p_hat[0]"] == 0.0 and z.passed
    s = check_bk_decomposition(5.0, U.with_intensity(0.5), 1.4, 400, 10, relative=True)
    assert s.passed
    assert check_bk_decomposition(5.0, U.with_intensity(0.5), 1.4, 400, 10, relative=True) == s
