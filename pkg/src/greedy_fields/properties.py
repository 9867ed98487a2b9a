"""Machine checks of the model's inequalities.

Per-configuration checks (concatenation, corridor, self-bounding, gross bounds)
compare exact rational sums of witness marks and admit no tolerance. Stochastic
checks (concentration, BK) compare an empirical tail with an analytic or
estimated bound at a one-sided 3 sigma tolerance and flag 5 sigma violations as
hard failures.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidArgumentError
from .estimators import Observable, h, mean_se, run_replicates
from .geometry import Region, as_point, diamonds_null_overlap
from .pointprocess import MarkLaw, PointConfiguration, mix_seed
from .solver import (
    HARD_CAP,
    SolveSpec,
    max_animal_mass_bracket,
    max_diamond_path_mass,
    max_path_mass,
)

HARD_SIGMA = 5.0
TOL_SIGMA = 3.0


@dataclass(frozen=True)
class CheckReport:
    name: str
    instances: int
    violations: int
    worst_slack: float
    sigma: float = 0.0
    passed: bool = True
    hard_failure: bool = False
    warnings: int = 0
    details: Tuple[Tuple[str, float], ...] = ()

    def to_json(self) -> str:
        d = asdict(self)
        d["details"] = [list(x) for x in self.details]
        return json.dumps(d, allow_nan=True)


def merge(name: str, reports: Sequence[CheckReport]) -> CheckReport:
    """Aggregate per-configuration reports of one exact check."""
    v = sum(r.violations for r in reports)
    worst = max((r.worst_slack for r in reports), default=-math.inf)
    return CheckReport(
        name,
        sum(r.instances for r in reports),
        v,
        worst,
        0.0,
        v == 0,
        v > 0,
        sum(r.warnings for r in reports),
    )


def _exact(config: PointConfiguration, witness) -> Fraction:
    return sum((Fraction(float(config.marks[i])) for i in witness), Fraction(0))


def _exact_report(name: str, slacks: List[Fraction], details=()) -> CheckReport:
    """Each slack must be <= 0 (lhs - rhs of an inequality lhs <= rhs)."""
    bad = sum(1 for s in slacks if s > 0)
    worst = float(max(slacks)) if slacks else -math.inf
    return CheckReport(name, len(slacks), bad, worst, 0.0, bad == 0, bad > 0, 0, tuple(details))


# ---------------------------------------------------------------------------
# per-configuration inequalities


def check_concatenation(
    config: PointConfiguration,
    delta: float,
    chain: Sequence,
    budgets: Sequence[float],
    outer_delta: Optional[float] = None,
    cap: int = HARD_CAP,
) -> CheckReport:
    """Sum of diamond optima along the chain <= two-anchor optimum with the summed budget.

    The right side is unconstrained, or restricted to the outer diamond of
    aperture ``outer_delta`` between the chain's ends.
    """
    pts = [tuple(as_point(p)) for p in chain]
    if len(pts) < 2 or len(budgets) != len(pts) - 1:
        raise InvalidArgumentError("need k + 1 chain points and k budgets")
    if not diamonds_null_overlap(delta, pts):
        raise InvalidArgumentError("consecutive diamonds overlap on a set of positive volume")
    lhs = Fraction(0)
    for a, b, ell in zip(pts[:-1], pts[1:], budgets):
        r = max_diamond_path_mass(config, delta, a, b, ell, cap=cap)
        lhs += _exact(config, r.witness)
    total = math.fsum(budgets)
    region = Region.diamond(outer_delta, pts[0], pts[-1]) if outer_delta is not None else Region()
    rhs_r = max_path_mass(config, SolveSpec("path", pts[0], total, end=pts[-1], region=region), cap=cap)
    return _exact_report("concatenation", [lhs - _exact(config, rhs_r.witness)])


def corridor_rows(beta: float, delta: float, L: float, ell: float, d: int = 2):
    """Anchor chains of the corridor rows.

    Row k starts at 2 L k (k in {0..K}^(d-1) on the axes orthogonal to e1, with
    K = floor(delta ell / (4 d))) and has N = floor((1 - delta) ell / L) pieces of
    step L beta / (1 - delta) along e1.
    """
    if not (0 < beta < 1 and 0 < delta < 1 and L > 0 and ell > 0):
        raise InvalidArgumentError("corridor parameters out of range")
    N = int(math.floor((1 - delta) * ell / L))
    K = int(math.floor(delta * ell / (4 * d)))
    if N < 1:
        raise InvalidArgumentError("no corridor piece fits: (1 - delta) ell < L")
    step = L * beta / (1 - delta)
    if step > L:
        raise InvalidArgumentError("piece length exceeds its budget L; need beta <= 1 - delta")
    rows = []
    for k in itertools.product(range(K + 1), repeat=d - 1):
        off = np.array((0.0,) + tuple(2.0 * L * kk for kk in k))
        chain = [tuple(off + np.eye(d)[0] * n * step) for n in range(N + 1)]
        rows.append((k, chain))
    return rows, N, step


def check_corridor(
    config: PointConfiguration,
    beta: float,
    delta: float,
    L: float,
    ell: float,
    cap: int = HARD_CAP,
) -> CheckReport:
    """G(0 -> ell beta e1, ell) >= sum of the aperture-1/2 diamond optima of each row.

    Each row, joined to 0 and to ell beta e1 by straight segments, must be a path
    of length <= ell, and rows must be disjoint; otherwise the geometry is
    rejected.
    """
    d = config.dimension
    rows, N, step = corridor_rows(beta, delta, L, ell, d)
    start = np.zeros(d)
    end = np.zeros(d)
    end[0] = ell * beta
    for _, chain in rows:
        first, last = np.array(chain[0]), np.array(chain[-1])
        length = np.linalg.norm(first - start) + N * L + np.linalg.norm(end - last)
        if length > ell:
            raise InvalidArgumentError(f"corridor row needs length {length:.4g} > ell = {ell}")
        if not diamonds_null_overlap(0.5, chain):
            raise InvalidArgumentError("diamonds within a row overlap")
    if len(rows) > 1:
        r = step / 2 * math.tan(math.acos(0.5))
        if 2 * L < 2 * r:
            raise InvalidArgumentError("corridor rows overlap")
    full = max_path_mass(config, SolveSpec("path", tuple(start), ell, end=tuple(end)), cap=cap)
    rhs = _exact(config, full.witness)
    slacks = []
    for _, chain in rows:
        s = Fraction(0)
        for a, b in zip(chain[:-1], chain[1:]):
            s += _exact(config, max_diamond_path_mass(config, 0.5, a, b, L, cap=cap).witness)
        slacks.append(s - rhs)
    return _exact_report("corridor", slacks)


def check_self_bounding(
    config: PointConfiguration,
    ell: float,
    m: Optional[float] = None,
    end=None,
    cap: int = HARD_CAP,
) -> CheckReport:
    """Leave-one-out checks of 0 <= f(eta) - f(eta - atom) <= 1 and sum <= f(eta),
    for f = P(ell) / m (or the two-anchor version when ``end`` is given)."""
    if m is None:
        m = config.law.support_bound
    if m is None or not m > 0:
        raise InvalidArgumentError("self-bounding needs marks bounded by a known m")
    if len(config) and float(np.max(config.marks)) > m:
        raise InvalidArgumentError("a mark exceeds the stated bound m")
    d = config.dimension
    spec = SolveSpec("path", (0.0,) * d, ell, end=end)
    full = _exact(config, max_path_mass(config, spec, cap=cap).witness)
    mq = Fraction(float(m))
    slacks = []
    total = Fraction(0)
    for i in range(len(config)):
        keep = np.ones(len(config), dtype=bool)
        keep[i] = False
        sub = config.subset(keep)
        r = max_path_mass(sub, spec, cap=cap)
        # witness indices refer to the subset; map masses directly
        diff = full - _exact(sub, r.witness)
        total += diff
        slacks.append(-diff)  # diff >= 0
        slacks.append(diff - mq)  # diff <= m
    slacks.append(total - full)
    return _exact_report("self_bounding", slacks)


def check_gross_bounds(
    config: PointConfiguration,
    ell: float,
    penalties: Sequence[float] = (0.5, math.inf),
    end=None,
    cap: int = HARD_CAP,
) -> CheckReport:
    """P(l) <= A^(q)_lower <= A_lower <= A_upper <= P(2l), with the penalised
    lower brackets nonincreasing in q."""
    d = config.dimension
    start = (0.0,) * d
    p1 = _exact(config, max_path_mass(config, SolveSpec("path", start, ell, end=end), cap=cap).witness)
    p2 = _exact(config, max_path_mass(config, SolveSpec("path", start, 2 * ell, end=end), cap=cap).witness)
    a0 = max_animal_mass_bracket(config, SolveSpec("animal", start, ell, end=end), cap=cap)
    a_lo = _exact(config, a0.witness)
    a_up = Fraction(a0.value_upper)
    # the upper bracket is a rounded float; compare it with rounded values, which
    # preserves every exact inequality since fsum is monotone
    a_lo_f = Fraction(math.fsum(config.marks[list(a0.witness)]))
    slacks = [p1 - a_lo, a_lo_f - a_up, a_up - Fraction(float(p2))]
    prev = a_lo
    for q in sorted(penalties):
        aq = max_animal_mass_bracket(config, SolveSpec("animal", start, ell, end=end, penalty=q), cap=cap, lower_only=True)
        aq_lo = _exact(config, aq.witness)
        slacks += [p1 - aq_lo, aq_lo - prev]
        prev = aq_lo
    return _exact_report("gross_bounds", slacks)


# ---------------------------------------------------------------------------
# concentration


def unpen_bound(threshold: float, mean: float, m: float) -> float:
    """exp(-h(t / E) E / m) with t = threshold - E; 1 when t <= 0."""
    t = threshold - mean
    if t <= 0 or mean <= 0:
        return 1.0
    return math.exp(-h(t / mean) * mean / m)


def pen_bound(t: float, mean_n: float, alpha: float, q: float, m: float) -> float:
    """exp(-h(alpha) E[N]) + exp(-t^2 / ((1 + alpha) E[N] (q + m)^2)); at least 1 when t <= 0."""
    if t <= 0 or mean_n <= 0:
        return 1.0 + math.exp(-h(alpha) * max(mean_n, 0.0))
    return math.exp(-h(alpha) * mean_n) + math.exp(-(t**2) / ((1 + alpha) * mean_n * (q + m) ** 2))


def _stochastic_report(name: str, rows: List[Tuple[float, float, float]], n: int, warnings: int = 0) -> CheckReport:
    """rows of (p_hat, bound, sigma); violation when p_hat > bound + 3 sigma."""
    worst, wsig, bad, hard = -math.inf, 0.0, 0, False
    details = []
    for k, (p, b, s) in enumerate(rows):
        slack = p - b
        details += [(f"p_hat[{k}]", p), (f"bound[{k}]", b), (f"sigma[{k}]", s)]
        if slack > TOL_SIGMA * s:
            bad += 1
        if slack > HARD_SIGMA * s:
            hard = True
        if slack > worst:
            worst, wsig = slack, s
    return CheckReport(name, n, bad, worst, wsig, bad == 0, hard, warnings, tuple(details))


def check_concentration_unpen(
    law: MarkLaw,
    beta: float,
    ell: float,
    t_factors: Sequence[float],
    replicates: int,
    seed: int,
    kind: str = "path",
    directed: bool = False,
    d: int = 2,
    workers: int = 1,
    values: Optional[np.ndarray] = None,
) -> CheckReport:
    """Empirical P(G >= E + t) against exp(-h(t/E) E / m) for t = factor * E-hat.

    The mean is the same-run plug-in E-hat; the bound is evaluated for E at
    E-hat +- 2 SE and the smaller value is used.
    """
    m = law.support_bound
    if m is None:
        raise InvalidArgumentError("the unpenalised bound needs bounded marks")
    obs = Observable(kind, ell, law, beta=beta, directed=directed, d=d)
    vals = run_replicates(obs, replicates, seed, workers) if values is None else values
    n = len(vals)
    mu, se = mean_se(vals)
    rows = []
    for f in t_factors:
        thr = mu * (1 + f)
        p = float(np.count_nonzero(vals >= thr)) / n
        bound = min(unpen_bound(thr, mu + s * 2 * se, m) for s in (-1, 1))
        if f == 0:
            bound = 1.0
        rows.append((p, bound, math.sqrt(p * (1 - p) / n)))
    rep = _stochastic_report("concentration_unpen", rows, n)
    return _with_details(rep, (("mean", mu), ("se", se)))


def _with_details(rep: CheckReport, extra) -> CheckReport:
    return CheckReport(**{**asdict(rep), "details": tuple(extra) + rep.details})


def check_concentration_pen(
    law: MarkLaw,
    q: float,
    alpha: float,
    beta: float,
    ell: float,
    t_factors: Sequence[float],
    replicates: int,
    seed: int,
    directed: bool = False,
    d: int = 2,
    workers: int = 1,
    upper_warnings: bool = False,
) -> CheckReport:
    """Empirical tail of A^(q)(ell) against the two-term bound with E[N(ell)].

    A-values are lower brackets. E[N] is the mean of the animal lower bracket on
    the Dirac projection of the same samples. The bound is evaluated on the
    corners of E-hat +- 2 SE for both means and the smallest value is used. With
    ``upper_warnings`` the upper brackets are also tested and their violations
    counted as warnings.
    """
    m = law.support_bound
    if m is None or not law.is_finite:
        raise InvalidArgumentError("the penalised bound needs a finite law with bounded marks")
    if not q > 0 or not math.isfinite(q):
        raise InvalidArgumentError("penalty must be positive and finite")
    obs_a = Observable("animal", ell, law, beta=beta, directed=directed, penalty=q, d=d)
    obs_n = Observable("animal", ell, law, beta=beta, directed=directed, dirac=True, d=d)
    a_vals = run_replicates(obs_a, replicates, seed, workers)
    n_vals = run_replicates(obs_n, replicates, seed, workers)
    n = len(a_vals)
    mu, se = mean_se(a_vals)
    mn, sen = mean_se(n_vals)
    rows = []
    for f in t_factors:
        thr = mu * (1 + f)
        p = float(np.count_nonzero(a_vals >= thr)) / n
        corners = [
            pen_bound(thr - (mu + sa * 2 * se), mn + sb * 2 * sen, alpha, q, m)
            for sa in (-1, 1)
            for sb in (-1, 1)
        ]
        bound = min(corners) if f > 0 else max(1.0, min(corners))
        rows.append((p, bound, math.sqrt(p * (1 - p) / n)))
    warnings = 0
    if upper_warnings:
        up = np.array([_upper_value(obs_a, mix_seed(seed, r)) for r in range(replicates)])
        for (p, b, s), f in zip(rows, t_factors):
            pu = float(np.count_nonzero(up >= mu * (1 + f))) / n
            if pu - b > TOL_SIGMA * math.sqrt(pu * (1 - pu) / n):
                warnings += 1
    rep = _stochastic_report("concentration_pen", rows, n, warnings)
    return _with_details(rep, (("mean", mu), ("se", se), ("mean_N", mn), ("se_N", sen)))


def _upper_value(obs: Observable, seed: int) -> float:
    return max_animal_mass_bracket(obs.sample(seed), obs.spec(), cap=HARD_CAP).value_upper


# ---------------------------------------------------------------------------
# BK decomposition


@dataclass(frozen=True)
class _Half:
    """Directed path optimum on the atoms of one side of the hyperplane x_axis = at."""

    obs: Observable
    axis: int
    at: float
    side: int

    def sample(self, seed):
        return self.obs.sample(seed)

    def evaluate(self, config):
        if self.side:
            x = config.positions[:, self.axis] if len(config) else np.zeros(0)
            keep = x < self.at if self.side < 0 else x >= self.at
            config = config.subset(keep)
        return self.obs.evaluate(config)


def _tail_vector(vals: np.ndarray, ts: Sequence[int]) -> np.ndarray:
    return np.array([np.count_nonzero(vals >= t) / len(vals) for t in ts])


def check_bk_decomposition(
    ell: float,
    law: MarkLaw,
    zeta: float,
    replicates: int,
    seed: int,
    beta: float = 0.5,
    split_axis: int = 0,
    split_at: Optional[float] = None,
    d: int = 2,
    workers: int = 1,
    relative: bool = False,
) -> CheckReport:
    """P(G >= t) <= sum over integers t1 + t2 in [t - 2, t] of P(G1 >= t1) P(G2 >= t2).

    G is the directed path optimum G(0 -> ell beta e1, ell), and G1, G2 are the
    same optimum computed on the atoms on either side of a hyperplane; any path
    is covered by its two halves. The three probabilities come from independent
    runs. ``zeta`` sets t = zeta * ell, or t = zeta * E-hat[G] when ``relative``.
    """
    obs = Observable("path", ell, law, beta=beta, directed=True, d=d)
    at = ell * beta / 2 if split_at is None else split_at
    runs = []
    for k, side in enumerate((0, -1, 1)):
        half = _Half(obs, split_axis, at, side)
        runs.append(run_replicates(half, replicates, mix_seed(seed, k), workers))
    g, g1, g2 = runs
    n = replicates
    t = zeta * float(np.mean(g)) if relative else zeta * ell
    p = float(np.count_nonzero(g >= t)) / n
    # integer splits t1, t2 >= 0 with t - 2 <= t1 + t2 <= t
    top = int(math.floor(t))
    pairs = [(a, b) for a in range(top + 1) for b in range(top + 1 - a) if a + b >= t - 2]
    ts = list(range(top + 1))
    p1 = _tail_vector(g1, ts)
    p2 = _tail_vector(g2, ts)
    rhs = math.fsum(p1[a] * p2[b] for a, b in pairs)
    # delta method with the multinomial covariance of each arm's tail vector
    grad1 = np.zeros(len(ts))
    grad2 = np.zeros(len(ts))
    for a, b in pairs:
        grad1[a] += p2[b]
        grad2[b] += p1[a]

    def cov(pv):
        i, j = np.meshgrid(range(len(ts)), range(len(ts)), indexing="ij")
        return (pv[np.maximum(i, j)] - np.outer(pv, pv)) / n

    var = p * (1 - p) / n + grad1 @ cov(p1) @ grad1 + grad2 @ cov(p2) @ grad2
    rep = _stochastic_report("bk_decomposition", [(p, rhs, math.sqrt(max(var, 0.0)))], n)
    return _with_details(rep, (("t", t), ("pairs", float(len(pairs)))))
