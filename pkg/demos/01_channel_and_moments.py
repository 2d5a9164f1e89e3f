"""
Channel model and offload/contention moments
============================================

Walks through the physical defaults (500 m link at 4.8 GHz, -140 dBm/Hz noise,
1 MHz band) and how the rate threshold r trades offload time for waiting time.
"""

# %%
import math

import numpy as np

from oppaoi import SystemParams, accept_prob, expect_P, expect_T, expect_T2, path_loss_db

params = SystemParams()
print("path loss      %.3f dB" % path_loss_db(params.distance_km, params.carrier_mhz))
print("SNR per unit gain", params.snr_scale)
print("r range        [%.4g, %.4g] nats/s" % (params.r_min, params.r_max))

# %%
# A higher threshold means fewer accepted competitions (q drops) but a faster
# offload once one is accepted.
for r in np.geomspace(params.r_min, params.r_max, 6):
    q = accept_prob(r, params.gain_rate, params.link, params.bandwidth)
    print(f"r={r:10.4g}  q={q:.4f}  E[T]={expect_T(float(r), params) * 1e3:8.3f} ms  "
          f"E[T^2]={expect_T2(float(r), params) * 1e6:9.3f} ms^2  "
          f"E[P_3]={expect_P(1 / 3, float(r), 3, params) * 1e3:9.3f} ms")

# %%
# At r = B ln 2 the accepted gain only needs to exceed 1/snr_scale.
r = params.bandwidth * math.log(2)
print("q(B ln 2) =", accept_prob(r, params.gain_rate, params.link, params.bandwidth))
