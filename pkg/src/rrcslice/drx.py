"""
UE discontinuous-reception state machine and the window metrics built on it.

Time is counted in integer subframes (1 subframe = 1 ms). The UE occupies one
of four phases in every subframe:

    S0  receiving downlink data
    S1  connected, inactivity timer running
    S2  DRX on-duration, monitoring PDCCH
    S3  DRX sleep

Two engines advance the machine:

* :func:`step` walks one subframe at a time. It is slow and obviously correct,
  and the tests use it as the reference.
* :class:`DrxMachine` jumps from event to event with closed-form dwell
  accounting. The simulator and the oracle sweeps use it.

Both follow the same rules, so for identical inputs they produce identical
packet records and identical per-phase dwell totals.
"""
from __future__ import annotations

import enum
import math
import numbers
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .errors import EmptyWindow, InvalidDrxParams, InvalidWeight

SUBFRAME_MS = 1
PDCCH_PERIOD = 16  # subframes
CYCLE_GROUP = 256  # subframes per n_c unit
FRAME_WRAP = 1024

N_C_VALUES = (1, 2, 4, 6, 8, 12, 16, 18, 24, 30, 32, 36)
N_ON_VALUES = (1, 2, 3, 4, 8, 16, 32)
N_IN_VALUES = (0, 1, 2, 3, 4, 8, 16, 32)

DEFAULT_SERVICE_RATE = 1000  # bytes per subframe


class Phase(enum.IntEnum):
    S0 = 0
    S1 = 1
    S2 = 2
    S3 = 3


@dataclass(frozen=True, order=True)
class DrxParams:
    """One DRX configuration, stored as the raw 3GPP multipliers.

    ``n_c`` counts 256-subframe groups per cycle, ``n_on`` and ``n_in`` count
    16-subframe PDCCH periods, ``n_so`` places the on-duration at
    ``n_so / 256`` of the cycle.
    """

    n_c: int
    n_on: int
    n_in: int
    n_so: int = 0

    def __post_init__(self):
        if self.n_c not in N_C_VALUES:
            raise InvalidDrxParams(f"n_c={self.n_c} not in {N_C_VALUES}")
        if self.n_on not in N_ON_VALUES:
            raise InvalidDrxParams(f"n_on={self.n_on} not in {N_ON_VALUES}")
        if self.n_in not in N_IN_VALUES:
            raise InvalidDrxParams(f"n_in={self.n_in} not in {N_IN_VALUES}")
        if not (isinstance(self.n_so, int) and 0 <= self.n_so <= 255):
            raise InvalidDrxParams(f"n_so={self.n_so} outside 0..255")
        # derived lengths in subframes; plain attributes because they are hot
        # n_so/256 * T_c is always integral because T_c is a multiple of 256
        object.__setattr__(self, "t_c", CYCLE_GROUP * self.n_c * SUBFRAME_MS)
        object.__setattr__(self, "t_on", self.n_on * PDCCH_PERIOD)
        object.__setattr__(self, "t_in", self.n_in * PDCCH_PERIOD)
        object.__setattr__(self, "t_so", self.n_so * self.n_c)
        if self.t_on >= self.t_c:
            raise InvalidDrxParams(
                f"on-duration {self.t_on} ms must be shorter than cycle {self.t_c} ms")

    @property
    def indices(self) -> tuple[int, int, int, int]:
        return (N_C_VALUES.index(self.n_c), N_ON_VALUES.index(self.n_on),
                N_IN_VALUES.index(self.n_in), self.n_so)

    @classmethod
    def from_indices(cls, idx_c: int, idx_on: int, idx_in: int, n_so: int = 0) -> "DrxParams":
        try:
            if min(idx_c, idx_on, idx_in) < 0:
                raise IndexError
            return cls(N_C_VALUES[idx_c], N_ON_VALUES[idx_on], N_IN_VALUES[idx_in], n_so)
        except IndexError:
            raise InvalidDrxParams(
                f"index triple ({idx_c}, {idx_on}, {idx_in}) outside the action grid") from None

    # -- on-duration geometry -------------------------------------------------

    def on_window(self, t: int) -> bool:
        """True when subframe ``t`` lies inside an on-duration."""
        return (t - self.t_so) % self.t_c < self.t_on

    def next_on_start(self, t: int) -> int:
        """Smallest subframe ``>= t`` at which an on-duration begins."""
        return t + (self.t_so - t) % self.t_c

    def _on_prefix(self, x: int) -> int:
        q, r = divmod(x, self.t_c)
        return q * self.t_on + min(r, self.t_on)

    def on_subframes(self, a: int, b: int) -> int:
        """Number of on-duration subframes in ``[a, b)``."""
        if b <= a:
            return 0
        return self._on_prefix(b - self.t_so) - self._on_prefix(a - self.t_so)

    def on_starts(self, a: int, b: int) -> int:
        """Number of on-duration starts in ``[a, b)``."""
        if b <= a:
            return 0
        return (b - 1 - self.t_so) // self.t_c - (a - 1 - self.t_so) // self.t_c


def frame_counter(t: int) -> tuple[int, int]:
    """(frame number, subframe number) of absolute subframe ``t``; frames wrap at 1024."""
    return (t // 10) % FRAME_WRAP, t % 10


def tx_duration(size: int, service_rate: int = DEFAULT_SERVICE_RATE) -> int:
    """Subframes spent in S0 delivering ``size`` bytes (at least one)."""
    return max(1, -(-size // service_rate))


@dataclass(frozen=True)
class PacketRecord:
    arrival: int
    size: int
    delivered: int
    state_at_arrival: int

    def __post_init__(self):
        if self.delivered < self.arrival:
            raise ValueError("delivery precedes arrival")

    @property
    def delay(self) -> int:
        return self.delivered - self.arrival


@dataclass(frozen=True)
class PowerProfile:
    """Power draw per phase in milliwatts, S0 first."""

    p: tuple[float, float, float, float] = (500.0, 100.0, 50.0, 0.015)

    def __post_init__(self):
        p = tuple(float(v) for v in self.p)
        if len(p) != 4:
            raise ValueError("power profile needs exactly four entries")
        if not (p[0] >= p[1] >= p[2] >= p[3] > 0):
            raise ValueError(f"power profile must satisfy P0 >= P1 >= P2 >= P3 > 0, got {p}")
        object.__setattr__(self, "p", p)


DEFAULT_POWER = PowerProfile()


@dataclass(frozen=True)
class WindowMetrics:
    t_d: int
    t_offset: int
    n_cycles: int
    alpha: float
    beta: float
    f_ed: float
    dwell: tuple[int, int, int, int]


# -- metric formulas ----------------------------------------------------------

def sleep_ratio(window) -> float:
    """Fraction of the window spent in S3.

    ``window`` is either a 4-sequence of per-phase dwell totals or an iterable
    of ``(phase, duration)`` segments.
    """
    dwell = [0, 0, 0, 0]
    items = list(window)
    if len(items) == 4 and all(isinstance(v, numbers.Real) for v in items):
        dwell = [int(v) if isinstance(v, numbers.Integral) else float(v) for v in items]
    else:
        for phase, duration in items:
            dwell[int(phase)] += duration
    total = sum(dwell)
    if total <= 0:
        raise EmptyWindow("window spans no time")
    return dwell[Phase.S3] / total


def sleep_ratio_closed_form(t_offset: int, n_cycles: int, params: DrxParams, t_d: int) -> float:
    """Sleep ratio from the first sleep stretch plus whole cycles."""
    if t_d <= 0:
        raise EmptyWindow("window spans no time")
    return (t_offset + n_cycles * (params.t_c - params.t_on)) / t_d


def mean_delay(records: Sequence[PacketRecord], n_d: int | None = None) -> float:
    if not records:
        raise EmptyWindow("no packets in window")
    if n_d is not None and n_d != len(records):
        raise ValueError(f"expected {n_d} records, got {len(records)}")
    return sum(r.delay for r in records) / len(records)


def ed_index(alpha: float, beta: float, lam: float, t_max: float) -> float:
    """Weighted energy-efficiency/delay index; negative once beta exceeds t_max enough."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidWeight(f"lambda={lam} outside [0, 1]")
    if not t_max > 0:
        raise InvalidWeight(f"t_max={t_max} must be positive")
    return lam * alpha + (1.0 - lam) * (1.0 - beta / t_max)


def energy(dwell: Sequence[float], profile: PowerProfile = DEFAULT_POWER) -> float:
    """Energy in mJ for per-phase dwell times in ms (mW * ms = uJ)."""
    if any(d < 0 for d in dwell):
        raise ValueError("dwell times must be non-negative")
    return math.fsum(p * d for p, d in zip(profile.p, dwell)) / 1000.0


# -- subframe walker ----------------------------------------------------------

@dataclass(frozen=True)
class UeDrxState:
    """Walker state at the start of subframe ``t``.

    ``timer_remaining`` is the inactivity countdown (S1); ``tx_remaining`` the
    subframes left in the current S0 burst. ``pending`` holds packets that
    arrived in S3 and wait for the PDCCH occasion at ``wake_at``.
    """

    t: int = 0
    tx_remaining: int = 0
    timer_remaining: int = 0
    pending: tuple[tuple[int, int], ...] = ()
    wake_at: int | None = None
    dwell: tuple[int, int, int, int] = (0, 0, 0, 0)

    def phase(self, params: DrxParams) -> Phase:
        return _phase(self.t, self.tx_remaining, self.timer_remaining, self.pending, params)

    @property
    def frame(self) -> tuple[int, int]:
        return frame_counter(self.t)


def _phase(t, tx, timer, pending, params) -> Phase:
    if tx > 0:
        return Phase.S0
    if timer > 0:
        return Phase.S1
    if pending:
        return Phase.S3
    return Phase.S2 if params.on_window(t) else Phase.S3


def step(state: UeDrxState, params: DrxParams, arrivals: Iterable[int] = (),
         service_rate: int = DEFAULT_SERVICE_RATE) -> tuple[UeDrxState, list[PacketRecord]]:
    """Advance one subframe. ``arrivals`` are the sizes of packets arriving in it."""
    t = state.t
    tx, timer = state.tx_remaining, state.timer_remaining
    pending, wake = list(state.pending), state.wake_at
    out = []

    if pending and wake == t:
        for arrival, size in pending:
            out.append(PacketRecord(arrival, size, t, Phase.S3))
            tx += tx_duration(size, service_rate)
        pending, wake, timer = [], None, 0

    for size in arrivals:
        ph = _phase(t, tx, timer, pending, params)
        if ph == Phase.S3:
            if not pending:
                wake = params.next_on_start(t)
            pending.append((t, size))
        else:
            out.append(PacketRecord(t, size, t, ph))
            tx += tx_duration(size, service_rate)
            timer = 0

    ph = _phase(t, tx, timer, pending, params)
    if ph == Phase.S0:
        tx -= 1
        if tx == 0:
            timer = params.t_in
    elif ph == Phase.S1:
        timer -= 1
    dwell = list(state.dwell)
    dwell[ph] += 1
    return UeDrxState(t + 1, tx, timer, tuple(pending), wake, tuple(dwell)), out


def walk(arrivals: Sequence[tuple[int, int]], params_at, until: int,
         start: UeDrxState | None = None,
         service_rate: int = DEFAULT_SERVICE_RATE) -> tuple[UeDrxState, list[PacketRecord]]:
    """Run :func:`step` from ``start`` up to subframe ``until`` (exclusive).

    ``params_at`` is either a :class:`DrxParams` or a callable ``t -> DrxParams``.
    """
    state = start or UeDrxState()
    lookup = params_at if callable(params_at) else (lambda _t: params_at)
    by_time: dict[int, list[int]] = {}
    for t, size in arrivals:
        by_time.setdefault(t, []).append(size)
    records = []
    while state.t < until:
        state, out = step(state, lookup(state.t), by_time.get(state.t, ()), service_rate)
        records.extend(out)
    return state, records


# -- event-driven engine ------------------------------------------------------

@dataclass
class DrxMachine:
    """Event-jump twin of :func:`step`.

    Calls must come in non-decreasing time order. ``arrive`` returns the packet
    record immediately; for packets that land in S3 the delivery time is
    already fixed by the current parameters, so it is known at arrival.
    """

    params: DrxParams
    service_rate: int = DEFAULT_SERVICE_RATE
    cursor: int = 0
    tx_end: int = 0
    inact_end: int = 0
    wake: int | None = None
    pending: list[tuple[int, int]] = field(default_factory=list)
    dwell: list[int] = field(default_factory=lambda: [0, 0, 0, 0])
    on_starts_in_drx: int = 0

    def _account(self, a: int, b: int) -> None:
        if b <= a:
            return
        d = self.dwell
        s0_hi = min(b, self.tx_end)
        if s0_hi > a:
            d[0] += s0_hi - a
        s1_lo, s1_hi = max(a, self.tx_end), min(b, self.inact_end)
        if s1_hi > s1_lo:
            d[1] += s1_hi - s1_lo
        lo = max(a, self.tx_end, self.inact_end)
        if b > lo and self.pending:
            # waiting for the PDCCH occasion: asleep whatever the grid says now
            d[3] += b - lo
        elif b > lo:
            on = self.params.on_subframes(lo, b)
            d[2] += on
            d[3] += (b - lo) - on
            self.on_starts_in_drx += self.params.on_starts(lo, b)

    def _deliver_pending(self, t: int) -> None:
        burst = sum(tx_duration(size, self.service_rate) for _, size in self.pending)
        self.tx_end = t + burst
        self.inact_end = self.tx_end + self.params.t_in
        self.pending.clear()
        self.wake = None

    def advance_to(self, t: int) -> None:
        """Account every subframe before ``t``."""
        if t < self.cursor:
            raise ValueError(f"time went backwards: {t} < {self.cursor}")
        if self.pending and self.wake < t:
            self._account(self.cursor, self.wake)
            self.cursor = self.wake
            self._deliver_pending(self.wake)
        self._account(self.cursor, t)
        self.cursor = t
        if self.pending and self.wake == t:
            self._deliver_pending(t)

    def phase_at(self, t: int) -> Phase:
        self.advance_to(t)
        if t < self.tx_end:
            return Phase.S0
        if t < self.inact_end:
            return Phase.S1
        if self.pending:
            return Phase.S3
        return Phase.S2 if self.params.on_window(t) else Phase.S3

    def arrive(self, t: int, size: int) -> PacketRecord:
        ph = self.phase_at(t)
        if ph == Phase.S3:
            if not self.pending:
                self.wake = self.params.next_on_start(t)
            self.pending.append((t, size))
            return PacketRecord(t, size, self.wake, ph)
        self.tx_end = max(self.tx_end, t) + tx_duration(size, self.service_rate)
        self.inact_end = self.tx_end + self.params.t_in
        return PacketRecord(t, size, t, ph)

    def set_params(self, t: int, params: DrxParams) -> None:
        """Switch configuration effective from subframe ``t``."""
        self.advance_to(t)
        self.params = params
        if self.tx_end > t:
            self.inact_end = self.tx_end + params.t_in
        if self.pending and self.wake == t:
            self._deliver_pending(t)

    def sleep_run_end(self, t: int) -> int | None:
        """End of the S3 stretch containing ``t``, or None if ``t`` is not in S3."""
        if self.phase_at(t) != Phase.S3:
            return None
        return self.wake if self.pending else self.params.next_on_start(t)

    def snapshot(self) -> tuple[int, int, int, int]:
        return tuple(self.dwell)
