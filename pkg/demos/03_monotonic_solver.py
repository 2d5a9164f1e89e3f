"""
Certified one-dimensional minimization
======================================

Any function written as f - g with f, g nondecreasing can be minimized globally
on an interval: f(a) - g(b) lower-bounds it on [a, b]. The AoI surrogate splits
this way in r around the turning point of E[T]E[P], and in p on the intervals
between 1/n values.
"""

# %%
import math

from oppaoi import DmProblem, SystemParams, average_aoi, dm_split_r, find_r_ddagger, minimize_dm
from oppaoi.objective import dm_split_p, p_subintervals

toy = minimize_dm(DmProblem(lambda x: x * x, lambda x: x, 0.0, 1.0), eps=1e-8)
print("x^2 - x:", toy.x_star, toy.f_star, "gap", toy.gap, "evals", toy.evals)

# %%
params = SystemParams()
split = find_r_ddagger(params)
print("E[T]E[P] turns at r =", split.r)
r0 = params.bandwidth * math.log(2)
xi = average_aoi(1 / 3, r0, params).delta_bar
eps = 1e-6 * average_aoi(1 / 3, r0, params).numerator
for piece in dm_split_r(xi, 1 / 3, split.r, params):
    sol = minimize_dm(piece, eps)
    print(f"{piece.label:12s} r*={sol.x_star:.6g} F={sol.f_star:.4e} gap={sol.gap:.1e}")
for k, lo, hi in p_subintervals(params.n_devices):
    sol = minimize_dm(dm_split_p(xi, r0, k, params), eps)
    print(f"p in ({lo:.3f}, {hi:.3f}): p*={sol.x_star:.6f} F={sol.f_star:.4e}")
