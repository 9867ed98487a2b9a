"""Marked Poisson point processes on finite boxes, and maps between them.

A configuration is a finite sample of the process with intensity Leb x nu
restricted to an axis-aligned window. Every sample is a pure function of
(window, law, seed): randomness comes from a Philox4x64 counter-based stream
keyed by the seed, and replicate seeds are derived with :func:`mix_seed`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .geometry import Region

MASK64 = (1 << 64) - 1
DEFAULT_EPS_MIN = 1e-3

FAMILIES = ("dirac", "uniform", "exponential", "pareto", "power")


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix_seed(master: int, *path: int) -> int:
    """Derive a 64-bit child seed from a master seed and integer labels."""
    h = _splitmix64(int(master) & MASK64)
    for p in path:
        h = _splitmix64(h ^ (int(p) & MASK64))
    return h


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64))


@dataclass(frozen=True)
class MarkLaw:
    """Mark intensity measure nu = intensity x (named law on (0, inf)).

    For ``power`` the measure is ``intensity * t**(-a) dt`` on ``(0, m]``, which
    has infinite total mass when ``a >= 1``.
    """

    family: str
    params: Tuple[Tuple[str, float], ...]
    intensity: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown mark family {self.family!r}")
        if not (self.intensity >= 0.0 and math.isfinite(self.intensity)):
            raise ConfigurationError("intensity must be a finite nonnegative number")
        p = dict(self.params)
        need = {
            "dirac": {"m"},
            "uniform": {"m"},
            "exponential": {"rate", "m"},
            "pareto": {"shape", "scale"},
            "power": {"a", "m"},
        }[self.family]
        if set(p) != need:
            raise ConfigurationError(f"{self.family} needs parameters {sorted(need)}, got {sorted(p)}")
        for k, v in p.items():
            if k == "m" and self.family == "exponential" and v == math.inf:
                continue
            if not (v > 0 and math.isfinite(v)):
                raise ConfigurationError(f"parameter {k}={v} outside its domain")
        if self.family == "power" and not p["a"] < 2.0:
            raise ConfigurationError("power law needs a < 2 for a finite mean mass")

    # constructors -----------------------------------------------------------
    @classmethod
    def dirac(cls, m: float = 1.0, intensity: float = 1.0) -> "MarkLaw":
        return cls("dirac", (("m", float(m)),), float(intensity))

    @classmethod
    def uniform(cls, m: float = 1.0, intensity: float = 1.0) -> "MarkLaw":
        return cls("uniform", (("m", float(m)),), float(intensity))

    @classmethod
    def exponential(cls, rate: float = 1.0, m: float = math.inf, intensity: float = 1.0) -> "MarkLaw":
        return cls("exponential", (("m", float(m)), ("rate", float(rate))), float(intensity))

    @classmethod
    def pareto(cls, shape: float, scale: float = 1.0, intensity: float = 1.0) -> "MarkLaw":
        return cls("pareto", (("scale", float(scale)), ("shape", float(shape))), float(intensity))

    @classmethod
    def power(cls, a: float, m: float = 1.0, intensity: float = 1.0) -> "MarkLaw":
        return cls("power", (("a", float(a)), ("m", float(m))), float(intensity))

    def with_intensity(self, intensity: float) -> "MarkLaw":
        return MarkLaw(self.family, self.params, float(intensity))

    # derived properties -----------------------------------------------------
    @property
    def p(self) -> dict:
        return dict(self.params)

    @property
    def support_bound(self) -> Optional[float]:
        p = self.p
        if self.family in ("dirac", "uniform", "power"):
            return p["m"]
        if self.family == "exponential" and math.isfinite(p["m"]):
            return p["m"]
        return None

    @property
    def has_exp_moment(self) -> bool:
        return self.family != "pareto"

    @property
    def total_mass(self) -> float:
        """nu((0, inf)); ``inf`` for power laws with a >= 1."""
        if self.family == "power":
            a, m = self.p["a"], self.p["m"]
            if a >= 1.0:
                return math.inf
            return self.intensity * m ** (1 - a) / (1 - a)
        return self.intensity

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.total_mass)

    def mean_mark(self) -> float:
        p = self.p
        if self.family == "dirac":
            return p["m"]
        if self.family == "uniform":
            return p["m"] / 2
        if self.family == "exponential":
            r, m = p["rate"], p["m"]
            if not math.isfinite(m):
                return 1 / r
            return 1 / r - m * math.exp(-r * m) / (-math.expm1(-r * m))
        if self.family == "pareto":
            k, s = p["shape"], p["scale"]
            return math.inf if k <= 1 else k * s / (k - 1)
        raise ConfigurationError("mean mark of an infinite measure is undefined")

    def mass_below(self, t: float) -> float:
        """nu((0, t])."""
        p = self.p
        if self.family == "dirac":
            return self.intensity if t >= p["m"] else 0.0
        if self.family == "uniform":
            return self.intensity * min(t, p["m"]) / p["m"]
        if self.family == "exponential":
            r, m = p["rate"], p["m"]
            z = -math.expm1(-r * m) if math.isfinite(m) else 1.0
            return self.intensity * (-math.expm1(-r * min(t, m))) / z
        if self.family == "pareto":
            k, s = p["shape"], p["scale"]
            return 0.0 if t < s else self.intensity * (1 - (s / t) ** k)
        a, m = p["a"], p["m"]
        if a >= 1:
            return math.inf
        return self.intensity * min(t, m) ** (1 - a) / (1 - a)

    def small_mark_mass(self, eps: float) -> float:
        """Expected mass per unit volume carried by marks in (0, eps]."""
        if self.family != "power":
            return 0.0
        a = self.p["a"]
        return self.intensity * min(eps, self.p["m"]) ** (2 - a) / (2 - a)

    def sampling_rate(self, eps_min: Optional[float]) -> float:
        """Atoms per unit volume that the sampler draws."""
        if self.is_finite:
            return self.total_mass
        if eps_min is None or eps_min <= 0:
            raise ConfigurationError("infinite mark intensity needs a truncation floor eps_min")
        a, m = self.p["a"], self.p["m"]
        if eps_min >= m:
            return 0.0
        if a == 1.0:
            return self.intensity * math.log(m / eps_min)
        return self.intensity * (m ** (1 - a) - eps_min ** (1 - a)) / (1 - a)

    def sample_marks(self, rng: np.random.Generator, n: int, eps_min: Optional[float] = None) -> np.ndarray:
        # 1 - U lies in (0, 1]; every branch is an inverse CDF
        v = 1.0 - rng.random(n)
        p = self.p
        if self.family == "dirac":
            return np.full(n, p["m"])
        if self.family == "uniform":
            return p["m"] * v
        if self.family == "exponential":
            r, m = p["rate"], p["m"]
            if not math.isfinite(m):
                return -np.log(v) / r
            return -np.log1p(-v * (-math.expm1(-r * m))) / r
        if self.family == "pareto":
            return p["scale"] * v ** (-1.0 / p["shape"])
        a, m = p["a"], p["m"]
        lo = 0.0 if self.is_finite else eps_min
        if a == 1.0:
            return lo * (m / lo) ** v
        e = 1.0 - a
        return (lo**e + v * (m**e - lo**e)) ** (1.0 / e)

    # text form --------------------------------------------------------------
    def spec(self) -> str:
        parts = [f"{k}={v!r}" for k, v in self.params] + [f"intensity={self.intensity!r}"]
        return f"{self.family}:" + ",".join(parts)

    @classmethod
    def parse(cls, text: str) -> "MarkLaw":
        try:
            family, rest = text.split(":", 1)
            kv = dict(item.split("=", 1) for item in rest.split(",") if item)
            intensity = float(kv.pop("intensity", "1.0"))
            params = tuple(sorted((k, float(v)) for k, v in kv.items()))
        except ValueError as exc:
            raise ConfigurationError(f"malformed mark law {text!r}") from exc
        return cls(family, params, intensity)


@dataclass(frozen=True)
class Atom:
    position: np.ndarray
    mark: float


@dataclass(frozen=True, eq=False)
class PointConfiguration:
    """An immutable finite marked configuration on an axis-aligned window."""

    positions: np.ndarray
    marks: np.ndarray
    window: Tuple[Tuple[float, ...], Tuple[float, ...]]
    law: MarkLaw
    seed: int = 0
    bias_bound: float = 0.0

    def __post_init__(self):
        P = np.ascontiguousarray(np.asarray(self.positions, dtype=float))
        w = np.ascontiguousarray(np.asarray(self.marks, dtype=float).reshape(-1))
        lo, hi = (tuple(float(v) for v in c) for c in self.window)
        d = len(lo)
        if d < 2 or len(hi) != d:
            raise InvalidArgumentError("window corners must share a dimension >= 2")
        if P.size == 0:
            P = np.zeros((0, d))
        if P.ndim != 2 or P.shape[1] != d or P.shape[0] != w.shape[0]:
            raise InvalidArgumentError("positions and marks do not match the window dimension")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise InvalidArgumentError("marks must be finite and positive")
        if len(P) and (np.any(P < np.array(lo)) or np.any(P > np.array(hi))):
            raise InvalidArgumentError("atom outside window")
        if len(P) > 1 and len(np.unique(P, axis=0)) != len(P):
            raise InvalidArgumentError("atom positions must be pairwise distinct")
        P.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", P)
        object.__setattr__(self, "marks", w)
        object.__setattr__(self, "window", (lo, hi))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def dimension(self) -> int:
        return len(self.window[0])

    def __len__(self) -> int:
        return len(self.marks)

    @property
    def atoms(self) -> List[Atom]:
        return [Atom(p, float(m)) for p, m in zip(self.positions, self.marks)]

    def total_mass(self) -> float:
        return math.fsum(self.marks)

    def subset(self, keep) -> "PointConfiguration":
        keep = np.asarray(keep)
        return PointConfiguration(self.positions[keep], self.marks[keep], self.window, self.law, self.seed)

    def with_marks(self, marks) -> "PointConfiguration":
        return PointConfiguration(self.positions, marks, self.window, self.law, self.seed)

    # serialisation ----------------------------------------------------------
    def to_text(self) -> str:
        lo, hi = self.window
        corners = ",".join(repr(v) for v in lo) + ":" + ",".join(repr(v) for v in hi)
        lines = [f"d={self.dimension} seed={self.seed} law={self.law.spec()} window={corners}"]
        for p, m in zip(self.positions, self.marks):
            lines.append(" ".join(f"{v:.17g}" for v in (*p, m)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PointConfiguration":
        lines = text.strip("\n").split("\n")
        try:
            head = dict(tok.split("=", 1) for tok in lines[0].split(" "))
            d = int(head["d"])
            lo_s, hi_s = head["window"].split(":")
            window = (tuple(float(v) for v in lo_s.split(",")), tuple(float(v) for v in hi_s.split(",")))
            law = MarkLaw.parse(head["law"])
            rows = np.array([[float(v) for v in ln.split()] for ln in lines[1:] if ln.strip()], dtype=float)
        except (KeyError, ValueError, IndexError) as exc:
            raise ConfigurationError("malformed configuration text") from exc
        rows = rows.reshape(-1, d + 1)
        return cls(rows[:, :d], rows[:, d], window, law, int(head["seed"]))


def experiment_window(ell: float, beta: float = 0.0, d: int = 2):
    """Box [-ell, (1+beta) ell] x [-ell, ell]^(d-1), which contains every budget-ell
    path or animal anchored at the origin."""
    lo = (-ell,) * d
    hi = ((1 + beta) * ell,) + (ell,) * (d - 1)
    return lo, hi


def sample_ppp(window, law: MarkLaw, seed: int, eps_min: Optional[float] = None) -> PointConfiguration:
    """Sample the marked Poisson process with intensity Leb x nu on ``window``.

    Infinite-mass laws are truncated below ``eps_min`` (default 1e-3 for them);
    the expected discarded mass is recorded in ``bias_bound``.
    """
    lo = np.asarray(window[0], dtype=float)
    hi = np.asarray(window[1], dtype=float)
    if lo.shape != hi.shape or np.any(hi < lo):
        raise InvalidArgumentError("window must be a pair of ordered corners")
    if not law.is_finite and eps_min is None:
        eps_min = DEFAULT_EPS_MIN
    rate = law.sampling_rate(eps_min)
    vol = float(np.prod(hi - lo))
    rng = make_rng(seed)
    n = int(rng.poisson(rate * vol)) if vol > 0 and rate > 0 else 0
    P = lo + (hi - lo) * rng.random((n, lo.size))
    w = law.sample_marks(rng, n, eps_min)
    bias = 0.0 if law.is_finite else law.small_mark_mass(eps_min) * vol
    return PointConfiguration(P, w, (tuple(lo), tuple(hi)), law, seed, bias)


def _box_mask(P: np.ndarray, box) -> np.ndarray:
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    return np.all((P >= lo) & (P < hi), axis=1)


def region_mask(config: PointConfiguration, region) -> np.ndarray:
    """Atoms inside a Region, a half-open box ``(lo, hi)``, or a list of those (union)."""
    P = config.positions
    if isinstance(region, Region):
        return region.contains(P) if len(P) else np.zeros(0, dtype=bool)
    if isinstance(region, list):
        out = np.zeros(len(P), dtype=bool)
        for r in region:
            out |= region_mask(config, r)
        return out
    return _box_mask(P, region)


def mass_of(config: PointConfiguration, region) -> float:
    """Sum of the marks of the atoms lying in ``region``.

    Boxes are half-open, ``[lo, hi)``, so adjacent boxes partition space.
    """
    return math.fsum(config.marks[region_mask(config, region)])


def split_truncate(config: PointConfiguration, m: float):
    """Images of the configuration under t -> min(t, m) and t -> (t - m)^+.

    Atoms whose excess mark is zero are dropped from the second output.
    """
    if not m > 0:
        raise InvalidArgumentError("truncation level must be positive")
    w = config.marks
    low = np.minimum(w, m)
    high = w - low
    keep = high > 0
    first = config.with_marks(low)
    second = PointConfiguration(config.positions[keep], high[keep], config.window, config.law, config.seed)
    return first, second


def dirac_projection(config: PointConfiguration) -> PointConfiguration:
    """Same atoms, every mark set to 1."""
    return config.with_marks(np.ones(len(config)))


def discretize_layers(config: PointConfiguration, n: int, seed: int) -> List[PointConfiguration]:
    """Assign each atom independently and uniformly to one of ``n`` layers."""
    if n < 1:
        raise InvalidArgumentError("need at least one layer")
    labels = make_rng(seed).integers(0, n, size=len(config))
    return [config.subset(labels == i) for i in range(n)]
