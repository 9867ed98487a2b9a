"""Monte Carlo estimation of limit constants, tail probabilities and rate functions.

Replicate ``r`` of a grid cell with seed ``s`` samples its configuration with
seed ``mix_seed(s, r)``. Replicates are independent tasks, results are stored by
replicate index and aggregated with exactly rounded sums, so tables do not depend
on the number of workers.
"""

from __future__ import annotations

import csv
import io
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.stats import binomtest

from .errors import CapacityError, InvalidArgumentError
from .geometry import ball_volume, diamond_volume, ellipsoid_volume
from .pointprocess import MarkLaw, PointConfiguration, dirac_projection, experiment_window, mix_seed, sample_ppp
from .solver import HARD_CAP, SolveSpec, default_cap, max_animal_mass_bracket, max_path_mass
from .geometry import Region

TAIL_SCHEMA = "greedy_fields/tail-v1"
LIMIT_SCHEMA = "greedy_fields/limit-v1"
FEKETE_SCHEMA = "greedy_fields/fekete-v1"
CENSOR_P = 1e-4
TAIL_COLUMNS = (
    "variant", "beta", "zeta", "ell", "replicates", "hits", "p_hat",
    "ci_lo", "ci_hi", "rate_hat", "rate_lo", "rate_hi", "seed",
)


def h(s):
    """h(s) = (1 + s) log(1 + s) - s, vectorised, with h(0) = 0."""
    s = np.asarray(s, dtype=float)
    out = (1.0 + s) * np.log1p(s) - s
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observable:
    """A greedy functional G evaluated on fresh samples.

    ``kind`` is ``path`` or ``animal``. Directed observables use the anchors 0 and
    ell * beta * e1 (a closed loop at 0 when beta = 0); free ones use the single
    anchor 0. ``delta`` restricts a directed path to the diamond; ``dirac``
    evaluates on the Dirac projection (this gives N(ell) for animals).
    """

    kind: str
    ell: float
    law: MarkLaw
    beta: float = 0.0
    directed: bool = True
    delta: Optional[float] = None
    penalty: float = 0.0
    dirac: bool = False
    d: int = 2
    eps_min: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("path", "animal"):
            raise InvalidArgumentError(f"unknown observable kind {self.kind!r}")
        if not self.ell > 0:
            raise InvalidArgumentError("ell must be positive")
        if not 0.0 <= self.beta < 1.0:
            raise InvalidArgumentError("beta must lie in [0, 1)")
        if self.delta is not None:
            if self.kind != "path" or not self.directed or self.beta <= 0:
                raise InvalidArgumentError("diamond observables are directed paths with beta > 0")
        if self.d < 2:
            raise InvalidArgumentError("dimension must be at least 2")

    @property
    def label(self) -> str:
        tag = self.kind
        if self.penalty:
            tag += f"-pen{self.penalty:g}"
        if self.delta is not None:
            tag = f"diamond{self.delta:g}"
        if self.directed:
            tag += "-directed"
        if self.dirac:
            tag += "-dirac"
        return tag

    def window(self):
        return experiment_window(self.ell, self.beta if self.directed else 0.0, self.d)

    def spec(self) -> SolveSpec:
        start = (0.0,) * self.d
        end = None
        region = Region()
        if self.directed:
            end = (self.ell * self.beta,) + (0.0,) * (self.d - 1)
            if self.delta is not None:
                region = Region.diamond(self.delta, start, end)
        return SolveSpec(self.kind, start, self.ell, end=end, penalty=self.penalty, region=region)

    def reach_volume(self) -> float:
        sep = self.ell * self.beta if self.directed else 0.0
        if self.kind == "path":
            if not self.directed:
                return ball_volume(self.d, self.ell)
            v = ellipsoid_volume(self.d, self.ell, sep)
            if self.delta is not None and sep > 0:
                v = min(v, diamond_volume(self.d, self.delta, sep))
            return v
        if not self.directed:
            return ball_volume(self.d, self.ell)
        return ellipsoid_volume(self.d, 2 * self.ell - sep, sep)

    def expected_atoms(self) -> float:
        rate = self.law.sampling_rate(self.eps_min if not self.law.is_finite else None)
        return rate * self.reach_volume()

    def sample(self, seed: int) -> PointConfiguration:
        eps = None if self.law.is_finite else self.eps_min
        return sample_ppp(self.window(), self.law, seed, eps)

    def evaluate(self, config: PointConfiguration) -> float:
        if self.dirac:
            config = dirac_projection(config)
        spec = self.spec()
        if self.kind == "path":
            return max_path_mass(config, spec, cap=HARD_CAP).value_lower
        return max_animal_mass_bracket(config, spec, cap=HARD_CAP, lower_only=True).value_lower


def check_capacity(obs: Observable, cap: Optional[int] = None) -> None:
    cap = default_cap() if cap is None else cap
    n = obs.expected_atoms()
    if n > cap:
        raise CapacityError(
            f"expected {n:.1f} reachable atoms at ell={obs.ell} exceed the cap {cap}; "
            "lower the intensity or the budget, or raise GREEDY_FIELDS_CAP"
        )


def _run_chunk(args):
    obs, seed, lo, hi = args
    return lo, [obs.evaluate(obs.sample(mix_seed(seed, r))) for r in range(lo, hi)]


def run_replicates(obs: Observable, replicates: int, seed: int, workers: int = 1) -> np.ndarray:
    """Values of ``obs`` on replicates 0..replicates-1, in replicate order."""
    if replicates < 0:
        raise InvalidArgumentError("replicates must be nonnegative")
    out = np.empty(replicates)
    if workers <= 1 or replicates < 2:
        for r in range(replicates):
            out[r] = obs.evaluate(obs.sample(mix_seed(seed, r)))
        return out
    size = max(1, -(-replicates // (8 * workers)))
    jobs = [(obs, seed, lo, min(lo + size, replicates)) for lo in range(0, replicates, size)]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        for lo, vals in pool.map(_run_chunk, jobs):
            out[lo : lo + len(vals)] = vals
    return out


def mean_se(values: np.ndarray) -> Tuple[float, float]:
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mu = math.fsum(values) / n
    if n < 2:
        return mu, math.nan
    var = math.fsum((v - mu) ** 2 for v in values) / (n - 1)
    return mu, math.sqrt(var / n)


# ---------------------------------------------------------------------------
# limits


@dataclass(frozen=True)
class LimitEstimate:
    beta: float
    variant: str
    ell_grid: Tuple[float, ...]
    means: Tuple[float, ...]
    ses: Tuple[float, ...]
    extrapolated: float
    extrapolated_se: float
    seed: int


def estimate_limit(
    beta: float,
    variant: str,
    ell_grid: Sequence[float],
    replicates: int,
    seed: int,
    law: MarkLaw = MarkLaw.uniform(1.0),
    d: int = 2,
    directed: bool = True,
    workers: int = 1,
    cap: Optional[int] = None,
) -> LimitEstimate:
    """Mean of G(ell)/ell on each grid point; the estimate is the largest-ell mean."""
    grid = tuple(float(x) for x in ell_grid)
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidArgumentError("ell grid must be nonempty and strictly increasing")
    means, ses = [], []
    for i, ell in enumerate(grid):
        obs = Observable(variant, ell, law, beta=beta, directed=directed, d=d)
        check_capacity(obs, cap)
        vals = run_replicates(obs, replicates, mix_seed(seed, i), workers) / ell
        mu, se = mean_se(vals)
        means.append(mu)
        ses.append(se)
    return LimitEstimate(beta, variant, grid, tuple(means), tuple(ses), means[-1], ses[-1], seed)


# ---------------------------------------------------------------------------
# tails


def wilson(hits: int, n: int) -> Tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(int(hits), int(n)).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class TailEstimate:
    variant: str
    beta: float
    zeta: float
    ell: float
    replicates: int
    hits: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    rate_hat: float
    rate_lo: float
    rate_hi: float
    seed: int
    mode: str = "upper"
    rate_se: float = math.nan
    censored: bool = False

    def row(self) -> Tuple:
        return tuple(getattr(self, c) for c in TAIL_COLUMNS)


def _neglog(p: float, norm: float) -> float:
    return math.inf if p <= 0 else -math.log(p) / norm


def tail_from_values(
    values: np.ndarray,
    zeta: float,
    ell: float,
    mode: str = "upper",
    d: int = 2,
    variant: str = "path",
    beta: float = 0.0,
    seed: int = 0,
) -> TailEstimate:
    """Binomial tail estimate of P(G >= zeta ell) or P(G <= zeta ell).

    The rate is -log(p_hat) / ell for the upper tail and / ell^d for the lower
    tail. Its interval is the image of the Wilson interval; ``rate_se`` is the
    delta-method standard error sqrt((1 - p) / (n p)) / norm.
    """
    if mode not in ("upper", "lower"):
        raise InvalidArgumentError("mode must be upper or lower")
    n = len(values)
    thr = zeta * ell
    hits = int(np.count_nonzero(values >= thr if mode == "upper" else values <= thr))
    p = hits / n if n else math.nan
    lo, hi = wilson(hits, n)
    norm = ell if mode == "upper" else ell**d
    rate = _neglog(p, norm)
    se = math.sqrt((1 - p) / (n * p)) / norm if hits else math.inf
    censored = mode == "lower" and p < CENSOR_P
    return TailEstimate(
        variant, float(beta), float(zeta), float(ell), n, hits, p, lo, hi,
        rate, _neglog(hi, norm), _neglog(lo, norm), int(seed), mode, se, censored,
    )


def empirical_tail(
    beta: float,
    zeta: float,
    ell: float,
    variant: str,
    mode: str,
    replicates: int,
    seed: int,
    law: MarkLaw = MarkLaw.uniform(1.0),
    d: int = 2,
    directed: bool = True,
    workers: int = 1,
    cap: Optional[int] = None,
) -> TailEstimate:
    if replicates < 100:
        raise InvalidArgumentError("tail estimates need at least 100 replicates")
    obs = Observable(variant, ell, law, beta=beta, directed=directed, d=d)
    check_capacity(obs, cap)
    vals = run_replicates(obs, replicates, seed, workers)
    return tail_from_values(vals, zeta, ell, mode, d, obs.label, beta, seed)


def rate_table(
    betas: Sequence[float],
    zetas: Sequence[float],
    ells: Sequence[float],
    variant: str,
    replicates: int,
    seed: int,
    law: MarkLaw = MarkLaw.uniform(1.0),
    mode: str = "upper",
    d: int = 2,
    directed: bool = True,
    workers: int = 1,
    cap: Optional[int] = None,
) -> List[TailEstimate]:
    """Tail estimates on a (beta, zeta, ell) grid; one sample per (beta, ell) cell
    is shared by every zeta."""
    if replicates < 100:
        raise InvalidArgumentError("tail estimates need at least 100 replicates")
    rows = []
    for bi, beta in enumerate(betas):
        for li, ell in enumerate(ells):
            obs = Observable(variant, float(ell), law, beta=float(beta), directed=directed, d=d)
            check_capacity(obs, cap)
            cell_seed = mix_seed(seed, bi, li)
            vals = run_replicates(obs, replicates, cell_seed, workers)
            for zeta in zetas:
                rows.append(tail_from_values(vals, float(zeta), float(ell), mode, d, obs.label, beta, cell_seed))
    return rows


# ---------------------------------------------------------------------------
# Fekete audit


@dataclass(frozen=True)
class FeketeRow:
    ell1: float
    ell2: float
    a1: float
    a2: float
    a12: float
    slack: float
    sigma: float
    inconclusive: bool


def _a_and_sigma(values: np.ndarray, thr: float) -> Tuple[float, float, int]:
    n = len(values)
    hits = int(np.count_nonzero(values >= thr))
    if hits == 0:
        return math.inf, math.inf, 0
    p = hits / n
    return -math.log(p), math.sqrt((1 - p) / (n * p)), hits


def fekete_audit(
    beta: float,
    zeta: float,
    delta: float,
    ell_pairs: Sequence[Tuple[float, float]],
    replicates: int,
    seed: int,
    law: MarkLaw = MarkLaw.uniform(1.0),
    d: int = 2,
    workers: int = 1,
    cap: Optional[int] = None,
) -> List[FeketeRow]:
    """Slack a(l1 + l2) - a(l1) - a(l2) of a(l) = -log P(G^delta(0 -> l beta e1, l) >= zeta l).

    Every distinct ell is sampled once with its own seed, so the three terms of a
    pair with l1 != l2 are independent; for l1 = l2 the shared term counts twice
    in the error.
    """
    ells = sorted({float(x) for pair in ell_pairs for x in (pair[0], pair[1], pair[0] + pair[1])})
    stats = {}
    for ell in ells:
        obs = Observable("path", ell, law, beta=beta, directed=True, delta=delta, d=d)
        check_capacity(obs, cap)
        vals = run_replicates(obs, replicates, mix_seed(seed, int(round(ell * 1_000_000))), workers)
        stats[ell] = _a_and_sigma(vals, zeta * ell)
    rows = []
    for l1, l2 in ell_pairs:
        l1, l2 = float(l1), float(l2)
        a1, s1, _ = stats[l1]
        a2, s2, _ = stats[l2]
        a12, s12, _ = stats[l1 + l2]
        bad = not all(map(math.isfinite, (a1, a2, a12)))
        if bad:
            rows.append(FeketeRow(l1, l2, a1, a2, a12, math.nan, math.nan, True))
            continue
        var = s12**2 + (4 * s1**2 if l1 == l2 else s1**2 + s2**2)
        rows.append(FeketeRow(l1, l2, a1, a2, a12, a12 - a1 - a2, math.sqrt(var), False))
    return rows


# ---------------------------------------------------------------------------
# explicit rate floors


@dataclass(frozen=True)
class FloorValue:
    zeta: float
    value: float
    below_limit: bool
    alpha: float = math.nan


def unpen_floor(zeta: float, limit: float, m: float) -> float:
    """f(zeta) = h((zeta - G) / G) G / m."""
    return h((zeta - limit) / limit) * limit / m


def pen_floor(zeta: float, limit: float, m: float, q: float, c: float) -> Tuple[float, float]:
    """max over alpha of min(h(alpha) c, (zeta - G)^2 / ((1 + alpha) c (q + m)^2)).

    The first term increases and the second decreases in alpha, so the maximum
    sits at their crossing, found by root bracketing. Returns (value, alpha).
    """
    gap2 = (zeta - limit) ** 2
    k = (q + m) ** 2

    def diff(a):
        return h(a) * c - gap2 / ((1 + a) * c * k)

    hi = 1.0
    while diff(hi) < 0:
        hi *= 2.0
    alpha = brentq(diff, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return min(h(alpha) * c, gap2 / ((1 + alpha) * c * k)), alpha


def bounds_rate_floor(
    beta: float,
    zeta_grid: Sequence[float],
    m: float,
    q: float = 0.0,
    which: str = "unpen",
    limit: float = 1.0,
    c2: Optional[float] = None,
    nu_mass: Optional[float] = None,
    d: int = 2,
) -> List[FloorValue]:
    """Explicit lower bounds on the upper-tail rate at each zeta.

    ``pen`` needs the empirical constant ``c2`` and the mass nu((0, m]).
    Values at zeta <= limit are 0 with ``below_limit`` set.
    """
    if not m > 0:
        raise InvalidArgumentError("m must be positive")
    if not limit > 0:
        raise InvalidArgumentError("limit estimate must be positive")
    if which not in ("unpen", "pen"):
        raise InvalidArgumentError("which must be unpen or pen")
    if which == "pen" and (c2 is None or nu_mass is None):
        raise InvalidArgumentError("the penalised floor needs c2 and nu_mass")
    out = []
    for z in zeta_grid:
        z = float(z)
        if z <= limit:
            out.append(FloorValue(z, 0.0, True))
        elif which == "unpen":
            out.append(FloorValue(z, unpen_floor(z, limit, m), False))
        else:
            v, a = pen_floor(z, limit, m, q, c2 * nu_mass ** (1.0 / d))
            out.append(FloorValue(z, v, False, a))
    return out


# ---------------------------------------------------------------------------
# Dirac scaling and the moment counterexample


@dataclass(frozen=True)
class ScalingRow:
    intensity: float
    mean: float
    se: float
    constant: float
    constant_se: float


def dirac_scaling_check(
    intensity_grid: Sequence[float],
    ell: float,
    replicates: int,
    seed: int,
    d: int = 2,
    kind: str = "animal",
    workers: int = 1,
    cap: Optional[int] = None,
) -> List[ScalingRow]:
    """E[N(ell)]/ell on Dirac-projected samples, and its ratio to intensity^(1/d).

    N is the animal lower bracket by default, so the constant is an empirical
    lower estimate.
    """
    rows = []
    for i, lam in enumerate(intensity_grid):
        lam = float(lam)
        if lam == 0:
            rows.append(ScalingRow(0.0, 0.0, 0.0, math.nan, math.nan))
            continue
        obs = Observable(kind, ell, MarkLaw.dirac(1.0, lam), directed=False, dirac=True, d=d)
        check_capacity(obs, cap)
        vals = run_replicates(obs, replicates, mix_seed(seed, i), workers) / ell
        mu, se = mean_se(vals)
        s = lam ** (1.0 / d)
        rows.append(ScalingRow(lam, mu, se, mu / s, se / s))
    return rows


def moment_counterexample(
    ell_grid: Sequence[float],
    pareto_law: MarkLaw,
    zeta: float,
    replicates: int,
    seed: int,
    control_law: Optional[MarkLaw] = None,
    control_zeta: Optional[float] = None,
    d: int = 2,
    workers: int = 1,
    cap: Optional[int] = None,
    relative: bool = False,
) -> List[TailEstimate]:
    """Upper-tail rates of P(ell) for a heavy-tailed arm and a bounded control arm.

    With ``relative`` each zeta is a multiple of the arm's same-ell sample mean
    of P(ell)/ell, and the reported zeta is the resulting threshold per length.
    """
    if pareto_law.has_exp_moment:
        raise InvalidArgumentError("the counterexample needs a law without exponential moments")
    arms = [("pareto", pareto_law, zeta)]
    if control_law is not None:
        arms.append(("control", control_law, zeta if control_zeta is None else control_zeta))
    rows = []
    for ai, (name, law, z) in enumerate(arms):
        for li, ell in enumerate(ell_grid):
            obs = Observable("path", float(ell), law, directed=False, d=d)
            check_capacity(obs, cap)
            cell_seed = mix_seed(seed, ai, li)
            vals = run_replicates(obs, replicates, cell_seed, workers)
            zz = z * math.fsum(vals) / (len(vals) * ell) if relative else z
            rows.append(tail_from_values(vals, zz, float(ell), "upper", d, name, 0.0, cell_seed))
    return rows


# ---------------------------------------------------------------------------
# reports


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(rows: Iterable, columns: Sequence[str], schema: str) -> str:
    """CSV text with a schema comment line, a header row and 17-digit numbers."""
    buf = io.StringIO()
    buf.write(f"# schema: {schema}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in columns])
    return buf.getvalue()


def tail_csv(rows: Sequence[TailEstimate]) -> str:
    return write_csv(rows, TAIL_COLUMNS, TAIL_SCHEMA)


def read_csv(text: str) -> Tuple[str, List[dict]]:
    """Parse a report written by :func:`write_csv`; returns (schema, rows)."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# schema: "):
        raise InvalidArgumentError("report lacks a schema line")
    schema = lines[0][len("# schema: "):]
    return schema, list(csv.DictReader(lines[1:]))


def limit_csv(est: Sequence[LimitEstimate]) -> str:
    @dataclass
    class _Row:
        variant: str
        beta: float
        ell: float
        mean: float
        se: float
        seed: int

    rows = [_Row(e.variant, e.beta, l, m, s, e.seed) for e in est for l, m, s in zip(e.ell_grid, e.means, e.ses)]
    return write_csv(rows, ("variant", "beta", "ell", "mean", "se", "seed"), LIMIT_SCHEMA)


def fekete_csv(rows: Sequence[FeketeRow]) -> str:
    return write_csv(rows, [f.name for f in fields(FeketeRow)], FEKETE_SCHEMA)
