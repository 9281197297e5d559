"""
Learning DRX settings as traffic changes
========================================

Run the bundled scenario: one UE whose traffic goes from a packet per second,
to one every six seconds with large payloads, to five per second. The
controller picks a configuration per decision window of ten packets.
"""
import bisect
from collections import Counter

import numpy as np

from rrcslice import load_scenario, run
from rrcslice.scenario import bundled_scenario

sc = load_scenario(bundled_scenario())
rep = run(sc)
print(rep.summary())

# %%
# Split the windows at the traffic switches.
switches = [p.active_from for p in sc.ues[0].schedule][1:]
closes = [w.t_close for w in rep.windows]
bounds = [0] + [bisect.bisect_left(closes, t) for t in switches] + [len(closes)]
for k, (a, b) in enumerate(zip(bounds, bounds[1:])):
    rows = rep.windows[a:b]
    f = np.array([w.metrics.f_ed for w in rows])
    alpha = np.array([w.metrics.alpha for w in rows])
    beta = np.array([w.metrics.beta for w in rows])
    cycles = Counter(w.params.n_c for w in rows).most_common(2)
    print(f"phase {k + 1}: windows {a}-{b - 1}  mean f_ED {f.mean():.3f}  "
          f"alpha {alpha.mean():.3f}  beta {beta.mean():6.1f} ms  common n_c {cycles}")

# %%
# Mode changes (window index, new mode). Exploitation starts once the
# exploration cap is reached; a reward drop below what the held action used
# to earn sends the controller back to exploring.
print([(w, m.value) for w, m in rep.mode_switches[1]])

# %%
# Energy per phase from the per-window accounting.
energy = np.array([w.energy_mj for w in rep.windows])
print("energy per phase (J):", [round(float(energy[a:b].sum()) / 1000, 1)
                                 for a, b in zip(bounds, bounds[1:])])
