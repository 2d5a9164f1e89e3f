"""
Replaying the protocol
======================

The Monte Carlo simulator draws competitions, contention slots and channel
gains round by round. Its time-average AoI should match the renewal ratio.
"""

# %%
import math

import numpy as np

from oppaoi import SystemParams, average_aoi, run_cycle, simulate
from oppaoi.simulator import aoi_path

params = SystemParams(n_devices=5)
r0 = params.bandwidth * math.log(2)

# %%
# One cycle in detail: five rounds with 5, 4, ..., 1 active devices.
trace = run_cycle(0.2, r0, np.random.default_rng(1), params, prev_last_T=0.008)
for rec in trace.rounds:
    print(f"n={rec.n}  competitions={rec.competitions}  slots={rec.slots}  "
          f"T={rec.offload_time * 1e3:.2f} ms")
print("sawtooth breakpoints:", [(round(t, 4), round(a, 4)) for t, a, _ in aoi_path(trace)])

# %%
for p, r in [(0.1, 0.5 * r0), (0.2, r0), (0.4, 2.5 * r0)]:
    sim = simulate(p, r, 100_000, seed=7, params=params)
    ana = average_aoi(p, r, params).delta_bar
    print(f"p={p:.2f} r={r:9.4g}: simulated {sim.mean_aoi * 1e3:.4f} +- {sim.ci95 * 1e3:.4f} ms,"
          f" analytic {ana * 1e3:.4f} ms")
