"""Experiment runner.

Each subcommand reads a TOML experiment file (or a bundled desk preset),
validates it completely, and only then writes its artifacts and a run manifest
into the output directory. Exit codes: 0 success, 1 verification hard failure,
2 invalid configuration, 3 capacity exceeded, 4 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import CapacityError, ConfigurationError, GreedyFieldsError
from .estimators import (
    TAIL_SCHEMA,
    Observable,
    check_capacity,
    estimate_limit,
    fekete_csv,
    limit_csv,
    moment_counterexample,
    rate_table,
    read_csv,
    tail_csv,
    write_csv,
)
from .pointprocess import MarkLaw, PointConfiguration, experiment_window, mix_seed, sample_ppp
from .properties import (
    CheckReport,
    check_bk_decomposition,
    check_concatenation,
    check_concentration_pen,
    check_concentration_unpen,
    check_corridor,
    check_gross_bounds,
    check_self_bounding,
    merge,
)
from .solver import HARD_CAP, SolveSpec, default_cap, max_animal_mass_bracket, max_path_mass

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_CAPACITY, EXIT_IO = 0, 1, 2, 3, 4

KINDS = (
    "sample",
    "solve",
    "scan-lln",
    "tail",
    "rate-table",
    "fekete",
    "concentration",
    "verify",
    "counterexample",
)

MAX_GRID = 64
MAX_REPLICATES = 10**6
VERIFY_CHECKS = ("concatenation", "corridor", "self_bounding", "gross_bounds", "concentration_unpen", "concentration_pen", "bk")

# keys every experiment accepts
_COMMON = {
    "kind": None,
    "seed": None,
    "dimension": 2,
    "law": "uniform:m=1.0,intensity=0.2",
    "cap": None,
}

# desk presets; a key absent here is rejected for that kind
PRESETS: Dict[str, dict] = {
    "sample": {"ell": 6.0, "beta": 0.0},
    "solve": {"variant": "path", "ell": 4.0, "beta": 0.0, "directed": False, "delta": None, "q": 0.0, "input": None, "upper": True},
    "scan-lln": {"variant": "path", "betas": [0.0, 0.3, 0.6], "ells": [4.0, 8.0, 12.0], "directed": True, "replicates": 2000},
    "tail": {"variant": "path", "mode": "upper", "betas": [0.0], "zetas": [0.3, 0.45, 0.6], "ells": [6.0, 9.0, 12.0], "directed": True, "replicates": 10000},
    "rate-table": {"variant": "path", "betas": [0.0, 0.3], "zetas": [0.2, 0.3, 0.4, 0.5, 0.6], "ells": [10.0], "directed": True, "replicates": 10000},
    "fekete": {"beta": 0.5, "delta": 0.5, "zeta": 0.33, "pairs": [[4.0, 4.0], [4.0, 8.0], [8.0, 8.0], [4.0, 12.0], [8.0, 12.0], [12.0, 12.0]], "replicates": 10000},
    "concentration": {"which": "unpen", "variant": "path", "beta": 0.0, "directed": False, "ell": 8.0, "t_factors": [0.5, 1.0, 2.0], "q": 0.5, "alpha": 1.0, "replicates": 10000},
    "verify": {"checks": list(VERIFY_CHECKS), "configs": 50, "replicates": 10000},
    "counterexample": {"ells": [4.0, 8.0, 12.0], "zeta": 2.0, "control_law": "uniform:m=1.0,intensity=0.05", "control_zeta": 2.0, "relative": True, "replicates": 10000},
}
PRESET_LAWS = {
    "fekete": "uniform:m=1.0,intensity=0.15",
    "concentration": "uniform:m=1.0,intensity=0.12",
    "verify": "uniform:m=1.0,intensity=0.5",
    "counterexample": "pareto:scale=0.1,shape=2.5,intensity=0.05",
}


def _grid(cfg: dict, key: str, lo: float = -math.inf, positive: bool = False) -> List[float]:
    v = cfg[key]
    if not isinstance(v, list) or not v:
        raise ConfigurationError(f"{key} must be a nonempty list")
    if len(v) > MAX_GRID:
        raise CapacityError(f"{key} has {len(v)} entries; the cap is {MAX_GRID}")
    try:
        out = [float(x) for x in v]
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{key} must contain numbers") from exc
    if any(not math.isfinite(x) or x < lo or (positive and x <= 0) for x in out):
        raise ConfigurationError(f"{key} has out-of-range entries")
    return out


def _num(cfg: dict, key: str, positive: bool = False) -> float:
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"{key} must be a number")
    if positive and not v > 0:
        raise ConfigurationError(f"{key} must be positive")
    return float(v)


def load_config(kind: str, path: Optional[str], seed: Optional[int]) -> dict:
    """Merge the preset of ``kind`` with a TOML file and validate the result."""
    if kind not in KINDS:
        raise ConfigurationError(f"unknown experiment kind {kind!r}")
    cfg = {**_COMMON, **copy.deepcopy(PRESETS[kind])}
    cfg["kind"] = kind
    if kind in PRESET_LAWS:
        cfg["law"] = PRESET_LAWS[kind]
    if path is None:
        cfg["seed"] = 42 if seed is None else seed
    else:
        try:
            with open(path, "rb") as fh:
                user = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
        unknown = sorted(set(user) - set(cfg))
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        if user.get("kind", kind) != kind:
            raise ConfigurationError(f"config kind {user['kind']!r} does not match subcommand {kind!r}")
        if "seed" not in user and seed is None:
            raise ConfigurationError("seed is mandatory")
        cfg.update(user)
        if seed is not None:
            cfg["seed"] = seed
    return validate(cfg)


def validate(cfg: dict) -> dict:
    s = cfg["seed"]
    if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**64:
        raise ConfigurationError("seed must be an integer in [0, 2^64)")
    d = cfg["dimension"]
    if isinstance(d, bool) or not isinstance(d, int) or not 2 <= d <= 4:
        raise ConfigurationError("dimension must be an integer in [2, 4]")
    if not isinstance(cfg["law"], str):
        raise ConfigurationError("law must be a string such as 'uniform:m=1,intensity=0.2'")
    law = MarkLaw.parse(cfg["law"])
    cap = cfg["cap"]
    if cap is None:
        cap = default_cap()
    elif isinstance(cap, bool) or not isinstance(cap, int) or not 0 <= cap <= HARD_CAP:
        raise ConfigurationError(f"cap must be an integer in [0, {HARD_CAP}]")
    out = dict(cfg, cap=cap, _law=law)
    for key in ("ells", "betas", "zetas", "t_factors"):
        if key in cfg:
            out[key] = _grid(cfg, key, lo=0.0, positive=key == "ells")
    for key in ("betas",):
        if key in out and any(b >= 1 for b in out[key]):
            raise ConfigurationError("betas must lie in [0, 1)")
    for key in ("ell", "alpha"):
        if key in cfg:
            out[key] = _num(cfg, key, positive=True)
    for key in ("beta", "q", "zeta", "control_zeta"):
        if key in cfg:
            out[key] = _num(cfg, key)
    if "replicates" in cfg:
        r = cfg["replicates"]
        if isinstance(r, bool) or not isinstance(r, int) or r < 1:
            raise ConfigurationError("replicates must be a positive integer")
        if r > MAX_REPLICATES:
            raise CapacityError(f"replicates exceed the cap {MAX_REPLICATES}")
    if "variant" in cfg and cfg["variant"] not in ("path", "animal"):
        raise ConfigurationError("variant must be path or animal")
    if "mode" in cfg and cfg["mode"] not in ("upper", "lower"):
        raise ConfigurationError("mode must be upper or lower")
    if "relative" in cfg and not isinstance(cfg["relative"], bool):
        raise ConfigurationError("relative must be true or false")
    if "which" in cfg and cfg["which"] not in ("unpen", "pen"):
        raise ConfigurationError("which must be unpen or pen")
    if "pairs" in cfg:
        p = cfg["pairs"]
        if not isinstance(p, list) or not p or any(not isinstance(x, list) or len(x) != 2 for x in p):
            raise ConfigurationError("pairs must be a nonempty list of [l1, l2]")
        out["pairs"] = [(float(a), float(b)) for a, b in p]
    if "checks" in cfg:
        c = cfg["checks"]
        if not isinstance(c, list) or not c or any(x not in VERIFY_CHECKS for x in c):
            raise ConfigurationError(f"checks must be a nonempty subset of {VERIFY_CHECKS}")
    if "control_law" in cfg and cfg["control_law"] is not None:
        out["_control_law"] = MarkLaw.parse(cfg["control_law"])
    if cfg.get("delta") is not None:
        out["delta"] = _num(cfg, "delta", positive=True)
    return out


def public(cfg: dict) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if not k.startswith("_")}


def config_hash(cfg: dict) -> str:
    blob = json.dumps(public(cfg), sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# experiment kinds; each returns {filename: text} plus per-table seeds


Artifacts = Tuple[Dict[str, str], Dict[str, int], int]


def _run_sample(cfg, workers) -> Artifacts:
    law = cfg["_law"]
    win = experiment_window(cfg["ell"], cfg["beta"], cfg["dimension"])
    config = sample_ppp(win, law, cfg["seed"])
    return {"sample.txt": config.to_text()}, {"sample.txt": cfg["seed"]}, EXIT_OK


def _run_solve(cfg, workers) -> Artifacts:
    d = cfg["dimension"]
    if cfg["input"] is not None:
        try:
            text = Path(cfg["input"]).read_text()
        except OSError as exc:
            raise IOError(f"cannot read {cfg['input']}: {exc}") from exc
        config = PointConfiguration.from_text(text)
        d = config.dimension
    else:
        win = experiment_window(cfg["ell"], cfg["beta"] if cfg["directed"] else 0.0, d)
        config = sample_ppp(win, cfg["_law"], cfg["seed"])
    obs = Observable(
        cfg["variant"], cfg["ell"], config.law, beta=cfg["beta"], directed=cfg["directed"],
        delta=cfg["delta"], penalty=cfg["q"], d=d,
    )
    spec = obs.spec()
    if cfg["variant"] == "path":
        res = max_path_mass(config, spec, cap=cfg["cap"])
    else:
        res = max_animal_mass_bracket(config, spec, cap=cfg["cap"], lower_only=not cfg["upper"])
    payload = {
        "variant": obs.label,
        "ell": cfg["ell"],
        "beta": cfg["beta"],
        "value_lower": res.value_lower,
        "value_upper": res.value_upper,
        "exact": res.exact,
        "length_used": res.length_used,
        "nodes_explored": res.nodes_explored,
        "witness": [int(i) for i in res.witness],
        "witness_points": [[float(x) for x in config.positions[i]] for i in res.witness],
    }
    return {"solve.json": json.dumps(payload, indent=1) + "\n"}, {"solve.json": cfg["seed"]}, EXIT_OK


def _observables(cfg, betas, ells, **kw):
    for b in betas:
        for l in ells:
            check_capacity(
                Observable(cfg["variant"], l, cfg["_law"], beta=b, directed=cfg.get("directed", True), d=cfg["dimension"], **kw),
                cfg["cap"],
            )


def _run_scan(cfg, workers) -> Artifacts:
    _observables(cfg, cfg["betas"], cfg["ells"])
    if any(b <= a for a, b in zip(cfg["ells"], cfg["ells"][1:])):
        raise ConfigurationError("ells must be strictly increasing")
    est, seeds = [], {}
    for i, b in enumerate(cfg["betas"]):
        s = mix_seed(cfg["seed"], i)
        seeds[f"beta={b:g}"] = s
        est.append(
            estimate_limit(b, cfg["variant"], cfg["ells"], cfg["replicates"], s, cfg["_law"],
                           cfg["dimension"], cfg["directed"], workers, cfg["cap"])
        )
    return {"limit.csv": limit_csv(est)}, seeds, EXIT_OK


def _run_tail(cfg, workers) -> Artifacts:
    _observables(cfg, cfg["betas"], cfg["ells"])
    if cfg["replicates"] < 100:
        raise ConfigurationError("tail estimates need at least 100 replicates")
    mode = cfg.get("mode", "upper")
    rows = rate_table(cfg["betas"], cfg["zetas"], cfg["ells"], cfg["variant"], cfg["replicates"], cfg["seed"],
                      cfg["_law"], mode, cfg["dimension"], cfg["directed"], workers, cfg["cap"])
    name = "tail.csv" if cfg["kind"] == "tail" else "rate_table.csv"
    return {name: tail_csv(rows)}, {name: cfg["seed"]}, EXIT_OK


def _run_fekete(cfg, workers) -> Artifacts:
    from .estimators import fekete_audit

    ells = {a + b for a, b in cfg["pairs"]} | {x for p in cfg["pairs"] for x in p}
    for l in ells:
        check_capacity(Observable("path", l, cfg["_law"], beta=cfg["beta"], delta=cfg["delta"], d=cfg["dimension"]), cfg["cap"])
    rows = fekete_audit(cfg["beta"], cfg["zeta"], cfg["delta"], cfg["pairs"], cfg["replicates"], cfg["seed"],
                        cfg["_law"], cfg["dimension"], workers, cfg["cap"])
    return {"fekete.csv": fekete_csv(rows)}, {"fekete.csv": cfg["seed"]}, EXIT_OK


def _jsonl(reports: Sequence[CheckReport]) -> str:
    return "".join(r.to_json() + "\n" for r in reports)


def _run_concentration(cfg, workers) -> Artifacts:
    law = cfg["_law"]
    if cfg["which"] == "unpen":
        obs = Observable(cfg["variant"], cfg["ell"], law, beta=cfg["beta"], directed=cfg["directed"], d=cfg["dimension"])
        check_capacity(obs, cfg["cap"])
        rep = check_concentration_unpen(law, cfg["beta"], cfg["ell"], cfg["t_factors"], cfg["replicates"], cfg["seed"],
                                        cfg["variant"], cfg["directed"], cfg["dimension"], workers)
    else:
        obs = Observable("animal", cfg["ell"], law, beta=cfg["beta"], directed=cfg["directed"], penalty=cfg["q"], d=cfg["dimension"])
        check_capacity(obs, cfg["cap"])
        rep = check_concentration_pen(law, cfg["q"], cfg["alpha"], cfg["beta"], cfg["ell"], cfg["t_factors"],
                                      cfg["replicates"], cfg["seed"], cfg["directed"], cfg["dimension"], workers)
    return {"concentration.jsonl": _jsonl([rep])}, {"concentration.jsonl": cfg["seed"]}, EXIT_FAIL if rep.hard_failure else EXIT_OK


def verify_suite(seed: int, law: MarkLaw, configs: int, replicates: int, checks: Sequence[str], workers: int = 1) -> List[CheckReport]:
    """The default verification suite at desk scale."""
    out = []
    U = MarkLaw.uniform
    for k, name in enumerate(VERIFY_CHECKS):
        if name not in checks:
            continue
        s = mix_seed(seed, k)
        if name == "concatenation":
            reps = [
                check_concatenation(sample_ppp(experiment_window(6.0, 0.5, 2), law, mix_seed(s, i)),
                                    0.5, [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], [2.0, 2.0, 2.0])
                for i in range(configs)
            ]
        elif name == "corridor":
            lw = law.with_intensity(min(law.intensity, 0.15))
            reps = [check_corridor(sample_ppp(experiment_window(15.0, 0.3, 2), lw, mix_seed(s, i)), 0.3, 0.6, 2.0, 15.0)
                    for i in range(configs)]
        elif name == "self_bounding":
            reps = [check_self_bounding(sample_ppp(experiment_window(2.5, 0.0, 2), law, mix_seed(s, i)), 2.5)
                    for i in range(configs)]
        elif name == "gross_bounds":
            reps = [check_gross_bounds(sample_ppp(experiment_window(2.0, 0.0, 2), law, mix_seed(s, i)), 2.0)
                    for i in range(configs)]
        elif name == "concentration_unpen":
            out.append(check_concentration_unpen(U(1.0, 0.12), 0.0, 8.0, (0.5, 1.0, 2.0), replicates, s, workers=workers))
            continue
        elif name == "concentration_pen":
            out.append(check_concentration_pen(MarkLaw.dirac(1.0, 0.12), 0.5, 1.0, 0.0, 8.0, (0.5, 1.0, 2.0), replicates, s, workers=workers))
            continue
        else:
            out.append(check_bk_decomposition(6.0, U(1.0, 0.5), 1.4, replicates, s, workers=workers, relative=True))
            continue
        out.append(merge(name, reps))
    return out


def _run_verify(cfg, workers) -> Artifacts:
    reps = verify_suite(cfg["seed"], cfg["_law"], int(cfg["configs"]), cfg["replicates"], cfg["checks"], workers)
    code = EXIT_FAIL if any(r.hard_failure for r in reps) else EXIT_OK
    return {"verify.jsonl": _jsonl(reps)}, {"verify.jsonl": cfg["seed"]}, code


def _run_counterexample(cfg, workers) -> Artifacts:
    law = cfg["_law"]
    ctrl = cfg.get("_control_law")
    for l in cfg["ells"]:
        for lw in (law, ctrl):
            if lw is not None:
                check_capacity(Observable("path", l, lw, directed=False, d=cfg["dimension"]), cfg["cap"])
    rows = moment_counterexample(cfg["ells"], law, cfg["zeta"], cfg["replicates"], cfg["seed"], ctrl,
                                 cfg["control_zeta"], cfg["dimension"], workers, cfg["cap"], cfg["relative"])
    return {"counterexample.csv": tail_csv(rows)}, {"counterexample.csv": cfg["seed"]}, EXIT_OK


RUNNERS: Dict[str, Callable] = {
    "sample": _run_sample,
    "solve": _run_solve,
    "scan-lln": _run_scan,
    "tail": _run_tail,
    "rate-table": _run_tail,
    "fekete": _run_fekete,
    "concentration": _run_concentration,
    "verify": _run_verify,
    "counterexample": _run_counterexample,
}


def run(cfg: dict, out: Path, force: bool = False, workers: int = 1) -> Tuple[int, Dict[str, str]]:
    """Compute every artifact of ``cfg`` in memory, then write them and a manifest."""
    files, seeds, code = RUNNERS[cfg["kind"]](cfg, workers)
    manifest = {
        "tool": "greedy_fields",
        "version": __version__,
        "kind": cfg["kind"],
        "config_hash": config_hash(cfg),
        "config": public(cfg),
        "seeds": seeds,
        "files": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(files.items())},
    }
    files[f"{cfg['kind']}.manifest.json"] = json.dumps(manifest, indent=1, sort_keys=True, default=list) + "\n"
    _write_all(out, files, force)
    return code, files


def _write_all(out: Path, files: Dict[str, str], force: bool) -> None:
    targets = [out / name for name in files]
    if not force:
        clash = [str(p) for p in targets if p.exists()]
        if clash:
            raise FileExistsError(f"output exists (use --force): {', '.join(clash)}")
    out.mkdir(parents=True, exist_ok=True)
    for p, text in zip(targets, files.values()):
        p.write_text(text)


# ---------------------------------------------------------------------------
# plot data

PLOT_COLUMNS = {
    TAIL_SCHEMA: ("beta", "zeta", "ell", "rate_hat", "rate_lo", "rate_hi"),
}
PLOT_SCHEMA = "greedy_fields/plotdata-v1"


def emit_plotdata(reports: Sequence[str]) -> str:
    """Long-format CSV: one observation per row.

    Tail and rate-table reports keep (beta, zeta, ell, rate_hat, rate_lo,
    rate_hi); other CSV reports become (source, row, variable, value) and check
    reports (source, row, variable, value) over their numeric fields.
    """
    tables = []
    for path in reports:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise IOError(f"cannot read report {path}: {exc}") from exc
        if path.endswith(".jsonl"):
            try:
                objs = [json.loads(line) for line in text.splitlines() if line.strip()]
            except json.JSONDecodeError as exc:
                raise IOError(f"corrupt report {path}: {exc}") from exc
            tables.append((path, "checks", objs))
            continue
        try:
            schema, rows = read_csv(text)
        except GreedyFieldsError as exc:
            raise IOError(f"corrupt report {path}: {exc}") from exc
        tables.append((path, schema, rows))
    schemas = {s for _, s, _ in tables}
    if not tables or schemas == {TAIL_SCHEMA}:
        cols = PLOT_COLUMNS[TAIL_SCHEMA]
        rows = [{c: float(r[c]) for c in cols} for _, _, rs in tables for r in rs]
        return _plain_csv(f"{PLOT_SCHEMA}/{TAIL_SCHEMA}", cols, rows)
    long = []
    for path, schema, rs in tables:
        for i, r in enumerate(rs):
            for k, v in r.items():
                num = _as_float(v)
                if num is not None:
                    long.append({"source": Path(path).name, "row": i, "variable": k, "value": num})
    return _plain_csv(f"{PLOT_SCHEMA}/long", ("source", "row", "variable", "value"), long)


def _as_float(v):
    if isinstance(v, bool) or v is None:
        return None
    try:
        return float(v)
    except (TypeError, ValueError):
        return None


def _plain_csv(schema, cols, rows) -> str:
    class _R:
        def __init__(self, d):
            self.__dict__.update(d)

    return write_csv([_R(r) for r in rows], cols, schema)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment file (defaults to the bundled preset)")
    common.add_argument("--seed", type=_u64, help="master seed, overrides the config")
    common.add_argument("--out", default="results", help="output directory")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    p = argparse.ArgumentParser(prog="greedy-fields", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    for k in KINDS:
        sub.add_parser(k, parents=[common], help=f"run a {k} experiment")
    e = sub.add_parser("emit-plotdata", parents=[common], help="tidy CSV from report files")
    e.add_argument("reports", nargs="*")
    return p


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    out = Path(args.out)
    try:
        if args.workers < 1:
            raise ConfigurationError("--workers must be at least 1")
        if args.command == "emit-plotdata":
            _write_all(out, {"plotdata.csv": emit_plotdata(args.reports)}, args.force)
            return EXIT_OK
        cfg = load_config(args.command, args.config, args.seed)
        code, files = run(cfg, out, args.force, args.workers)
        for name, text in files.items():
            if name.endswith(".jsonl"):
                sys.stdout.write(text)
        return code
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (OSError, FileExistsError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigurationError, GreedyFieldsError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
