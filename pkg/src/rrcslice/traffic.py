"""
Downlink traffic: Poisson arrivals with Poisson-distributed packet sizes.

Rates are per millisecond, so ``lambda_idt = 1/1000`` means one packet per
second on average and ``lambda_size = 1/600`` means 600-byte packets on
average. Sizes are drawn as ``1 + Poisson(mean - 1)`` which keeps every
packet at least one byte while preserving the mean.

Random streams come from numpy's PCG64 bit generator. A per-UE stream is
derived from ``SeedSequence([seed, ue_id])`` so traces do not depend on how
many other UEs a scenario contains.
"""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class TrafficProfile:
    lambda_idt: float
    lambda_size: float
    active_from: int = 0

    def __post_init__(self):
        if not self.lambda_idt > 0:
            raise ValueError(f"lambda_idt must be positive, got {self.lambda_idt}")
        if not self.lambda_size > 0:
            raise ValueError(f"lambda_size must be positive, got {self.lambda_size}")
        if self.active_from < 0:
            raise ValueError("active_from must be non-negative")

    @property
    def mean_gap(self) -> float:
        return 1.0 / self.lambda_idt

    @property
    def mean_size(self) -> float:
        return 1.0 / self.lambda_size


class TrafficSchedule(tuple):
    """Ordered profiles; the first starts at 0 and start times strictly increase."""

    def __new__(cls, profiles: Iterable[TrafficProfile]):
        profiles = tuple(profiles)
        if not profiles:
            raise ValueError("schedule needs at least one profile")
        if profiles[0].active_from != 0:
            raise ValueError("first profile must start at 0")
        starts = [p.active_from for p in profiles]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("profile start times must strictly increase")
        return super().__new__(cls, profiles)

    @property
    def switch_times(self) -> list[int]:
        return [p.active_from for p in self[1:]]


def schedule_rate_at(schedule: Sequence[TrafficProfile], now: float) -> TrafficProfile:
    """Profile with the greatest ``active_from <= now``."""
    starts = [p.active_from for p in schedule]
    i = bisect.bisect_right(starts, now) - 1
    if i < 0:
        raise ValueError(f"no profile active at {now}")
    return schedule[i]


def make_rng(seed: int, ue_id: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, ue_id])))


def draw_size(rng: np.random.Generator, profile: TrafficProfile) -> int:
    return 1 + int(rng.poisson(max(profile.mean_size - 1.0, 0.0)))


def next_arrival(rng: np.random.Generator, profile: TrafficProfile,
                 now: float) -> tuple[float, int]:
    """Draw the next arrival time (continuous ms) and its size in bytes."""
    gap = rng.exponential(profile.mean_gap)
    return now + gap, draw_size(rng, profile)


def generate_trace(schedule: Sequence[TrafficProfile], duration: int, seed: int,
                   ue_id: int = 0) -> list[tuple[int, int]]:
    """Arrivals in ``[0, duration)`` as ``(subframe, size)`` pairs.

    When a draw overshoots a rate switch the clock restarts at the switch
    under the new profile, which is exact for a memoryless process.
    """
    rng = make_rng(seed, ue_id)
    switches = [p.active_from for p in schedule[1:]] + [math.inf]
    trace = []
    now, k = 0.0, 0
    profile = schedule[0]
    while now < duration:
        arrival, size = next_arrival(rng, profile, now)
        if arrival >= switches[k]:
            now = float(switches[k])
            k += 1
            profile = schedule[k]
            continue
        if arrival >= duration:
            break
        trace.append((int(arrival), size))
        now = arrival
    return trace


TRACE_HEADER = ("ue_id", "arrival_ms", "size_bytes")


def write_trace(path: str | Path, traces: dict[int, Sequence[tuple[int, int]]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for ue_id in sorted(traces):
            for t, size in traces[ue_id]:
                w.writerow((ue_id, t, size))


def read_trace(path: str | Path) -> dict[int, list[tuple[int, int]]]:
    traces: dict[int, list[tuple[int, int]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"trace file lacks columns {sorted(missing)}")
        for row in reader:
            traces.setdefault(int(row["ue_id"]), []).append(
                (int(row["arrival_ms"]), int(row["size_bytes"])))
    for trace in traces.values():
        trace.sort(key=lambda x: x[0])
    return traces

