"""Normalised greedy masses settle as the budget grows.

For uniform marks the mean of G(0 -> ell*beta*e1, ell) / ell is tabulated on a
small grid of budgets and directions, then the upper-tail rate function is
read off at a few thresholds above the estimated limit.
"""
from greedy_fields.estimators import estimate_limit, rate_table, unpen_floor
from greedy_fields.pointprocess import MarkLaw

law = MarkLaw.uniform(1.0, intensity=0.3)
grid = [3.0, 5.0, 7.0]

print("beta   " + "  ".join(f"ell={e:g}" for e in grid))
limits = {}
for k, beta in enumerate((0.0, 0.3, 0.6)):
    est = estimate_limit(beta, "path", grid, 400, seed=100 + k, law=law)
    limits[beta] = est.extrapolated
    print(f"{beta:4.1f}   " + "    ".join(f"{m:.4f}" for m in est.means))

g = limits[0.3]
zetas = [0.8 * g, 1.2 * g, 1.6 * g]
rows = rate_table([0.3], zetas, [7.0], "path", 2000, seed=7, law=law)
print("\nzeta/G   p_hat    rate     floor")
for r in rows:
    floor = unpen_floor(r.zeta, g, 1.0) if r.zeta > g else 0.0
    print(f"{r.zeta / g:5.2f}   {r.p_hat:.4f}  {r.rate_hat:.4f}  {floor:.4f}")
