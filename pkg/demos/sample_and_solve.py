"""Sample a marked Poisson configuration and look at its greedy paths.

Walks through one realisation: the one-anchor path P(ell), the two-anchor path
to ell*beta*e1, the same path inside a diamond, and the animal bracket. The
solver value is cross-checked against the Held-Karp oracle.
"""
import numpy as np

from greedy_fields.errors import CapacityError
from greedy_fields.geometry import Region, path_length
from greedy_fields.pointprocess import MarkLaw, experiment_window, sample_ppp
from greedy_fields.solver import SolveSpec, held_karp_path_oracle, max_animal_mass_bracket, solve

ell, beta, delta = 6.0, 0.5, 0.5
law = MarkLaw.uniform(1.0, intensity=0.15)
config = sample_ppp(experiment_window(ell, beta), law, seed=2024)
print(f"{len(config)} atoms, total mass {config.marks.sum():.3f}")

end = (ell * beta, 0.0)
specs = {
    "one-anchor path": SolveSpec("path", (0.0, 0.0), ell),
    "path to ell*beta*e1": SolveSpec("path", (0.0, 0.0), ell, end=end),
    "path in diamond": SolveSpec("path", (0.0, 0.0), ell, end=end,
                                 region=Region.diamond(delta, (0.0, 0.0), end)),
}
for name, spec in specs.items():
    res = solve(config, spec)
    pts = np.vstack([spec.start, config.positions[list(res.witness)]] + ([spec.end] if spec.end else []))
    print(f"{name:22s} mass {res.value_lower:.4f}  atoms {len(res.witness):2d}  "
          f"length {path_length(pts):.3f} <= {ell}  nodes {res.nodes_explored}")

# an independent dynamic program over every subset of the reachable atoms
spec = specs["path to ell*beta*e1"]
try:
    hk = held_karp_path_oracle(config, spec, cap=20)
    print("Held-Karp agrees:", hk.value_lower == solve(config, spec).value_lower)
except CapacityError:
    print("too many reachable atoms for the Held-Karp oracle")

# the upper bracket is a path with twice the budget, so halve it here
animal = max_animal_mass_bracket(config, SolveSpec("animal", (0.0, 0.0), ell / 2))
print(f"animal at budget {ell / 2:g}: bracket [{animal.value_lower:.4f}, {animal.value_upper:.4f}]")
