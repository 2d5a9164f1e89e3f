"""
Minimum AoI against transmit power
==================================

A small version of the transmit-power sweep: more power lowers the AoI, more
devices raise it. The full sweep is ``oppaoi fig3``.
"""

# %%
from pathlib import Path

from oppaoi import SystemParams, dinkelbach_solve
from oppaoi.io import plot_fig3, write_table

rows = []
for N in (3, 5):
    for ptx in (0.2, 1.0, 2.0):
        rep = dinkelbach_solve(SystemParams(n_devices=N, tx_power=ptx))
        rows.append({"N": N, "p_T_watts": ptx, "delta_star_seconds": rep.delta_star})
        print(f"N={N} p_T={ptx:.1f} W  AoI*={rep.delta_star * 1e3:.3f} ms  p*={rep.p_star:.3f}")

# %%
out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)
write_table(out / "power_sweep.csv", ["N", "p_T_watts", "delta_star_seconds"], rows)
plot_fig3(out / "power_sweep.csv", out / "power_sweep.svg")
print("wrote", out / "power_sweep.svg")
