"""
One UE under DRX
================

Follow a single UE through receiving, inactivity, on-duration and sleep,
then turn the dwell times into the sleep ratio, mean delay, ED index and
energy that the controller learns from.
"""
import numpy as np

from rrcslice import DrxMachine, DrxParams, Phase
from rrcslice.drx import ed_index, energy, mean_delay, sleep_ratio

# %%
# A cycle of 8 x 256 subframes with a 16-subframe on-duration and a
# 32-subframe inactivity timer. Lengths are derived from the multipliers.
p = DrxParams(n_c=8, n_on=1, n_in=2, n_so=0)
print("T_c, T_on, T_in, T_so =", p.t_c, p.t_on, p.t_in, p.t_so)

# %%
# Feed a few packets. The one arriving while the UE sleeps waits for the next
# on-duration; the one arriving while the inactivity timer runs does not.
m = DrxMachine(p)
records = []
for t, size in [(5, 1200), (30, 300), (900, 600), (4100, 50)]:
    r = m.arrive(t, size)
    records.append(r)
    print(f"t={t:5d}  state {Phase(r.state_at_arrival).name}  delay {r.delay} ms")
m.advance_to(6 * p.t_c)

# %%
# Dwell accounting covers every subframe exactly once.
dwell = np.array(m.dwell)
print("dwell S0..S3:", dwell, "sum", dwell.sum())

# %%
# Window metrics. Lambda weighs sleep against delay; T_max is the delay at
# which the delay term reaches zero.
alpha = sleep_ratio(dwell)
beta = mean_delay(records)
print(f"alpha {alpha:.4f}  beta {beta:.1f} ms  f_ED {ed_index(alpha, beta, 0.5, 300):.4f}")
print(f"energy {energy(dwell):.3f} mJ")
