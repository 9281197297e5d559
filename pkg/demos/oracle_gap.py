"""
How far is the learned action from the best fixed one?
======================================================

Replay one seeded trace under every one of the 672 (cycle, on-duration,
inactivity) actions and rank them, then see where the controller's choice
lands. The start offset is recomputed per window in both cases.
"""
import numpy as np

from rrcslice import ACTIONS, DrxAction, DrxParams, Mode, Scenario, run
from rrcslice.rrc import RatFlavor
from rrcslice.scenario import SliceSpec, UeSpec
from rrcslice.sim import oracle_sweep, replay_with_action
from rrcslice.traffic import TrafficProfile, TrafficSchedule, generate_trace

sched = TrafficSchedule([TrafficProfile(1 / 1000, 1 / 600)])
sc = Scenario(seed=3, duration=1_500_000,
              slices=[SliceSpec(RatFlavor.NbIotUpOpt, DrxParams(1, 1, 0))],
              ues=[UeSpec(1, 0, sched)])

# %%
# Learn on the full trace, keep the action the controller settled on.
rep = run(sc)
held = [d for d in rep.decisions if d.outcome.mode_after is Mode.EXPLOIT]
learned = held[-1].outcome.action
print("learned action", learned, "->", learned.to_params())

# %%
# Exhaustive replay over the first 400 packets (a few seconds).
trace = generate_trace(sched, sc.duration, sc.seed, 1)[:400]
values = oracle_sweep(trace, sc.controller)
order = np.argsort(-values, kind="stable")
for rank, i in enumerate(order[:5], 1):
    print(f"{rank}. {ACTIONS[i]}  f_ED {values[i]:.4f}")
print("worst:", ACTIONS[order[-1]], f"{values[order[-1]]:.4f}")

# %%
got = replay_with_action(trace, learned, sc.controller)
print(f"learned {got:.4f} vs best {values[order[0]]:.4f} "
      f"(rank {int(np.flatnonzero(order == learned.flat)[0]) + 1} of 672)")

# %%
# The ED index trades sleep against delay. Longer cycles sleep a little more
# but every packet that finds the UE asleep waits for the next on-duration.
for c in (0, 1, 4, 11):
    a = DrxAction(c, 0, 0)
    print(f"n_c {a.to_params().n_c:2d}: f_ED {values[a.flat]:.4f}")
