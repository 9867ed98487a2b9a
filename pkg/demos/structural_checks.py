"""Deterministic inequalities on sampled configurations.

Each check solves a handful of related problems on the same realisation and
reports how many of the implied inequalities held and the worst slack.
"""
from greedy_fields.pointprocess import MarkLaw, experiment_window, mix_seed, sample_ppp
from greedy_fields.properties import (
    check_concatenation,
    check_concentration_unpen,
    check_gross_bounds,
    check_self_bounding,
    merge,
)

law = MarkLaw.uniform(1.0, intensity=0.4)
win = experiment_window(6.0, 0.5)
configs = [sample_ppp(win, law, mix_seed(5, s)) for s in range(20)]

reports = [
    merge("gross_bounds", [check_gross_bounds(c, 2.0) for c in configs]),
    merge("self_bounding", [check_self_bounding(c, 2.0) for c in configs]),
    merge("concatenation", [check_concatenation(c, 0.5, [(0, 0), (1.5, 0), (3, 0)], [2.0, 2.0]) for c in configs]),
    check_concentration_unpen(MarkLaw.uniform(1.0, 0.2), 0.0, 5.0, [0.5, 1.0], 500, seed=9),
]
for r in reports:
    print(f"{r.name:20s} {r.instances:5d} checks  {r.violations} violations  "
          f"worst slack {r.worst_slack:+.4f}  {'ok' if r.passed else 'FAILED'}")
