"""
Tabular Q-learning over DRX configurations.

The action grid is every (cycle, on-duration, inactivity) index triple, 672 in
all, flattened in lexicographic order so that ``argmax`` ties resolve to the
lowest triple. The start offset is not learned: after each decision it is set
to the mean phase of the last window's arrivals within the new cycle.

A decision state is the number of window packets that found the UE in each of
S0..S3. The ordered per-packet sequence is available with
``state_mode="sequence"`` for small windows.
"""
from __future__ import annotations

import enum
import math
from collections import Counter, deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .drx import (N_C_VALUES, N_IN_VALUES, N_ON_VALUES, PDCCH_PERIOD, DrxParams,
                  PacketRecord, WindowMetrics, ed_index)
from .errors import EmptyWindow, WindowIncomplete, WrongMode

N_ACTIONS = len(N_C_VALUES) * len(N_ON_VALUES) * len(N_IN_VALUES)
_STRIDE_C = len(N_ON_VALUES) * len(N_IN_VALUES)
_STRIDE_ON = len(N_IN_VALUES)


class Mode(enum.Enum):
    EXPLORE = "explore"
    EXPLOIT = "exploit"


@dataclass(frozen=True, order=True)
class DrxAction:
    idx_c: int
    idx_on: int
    idx_in: int

    def __post_init__(self):
        if not (0 <= self.idx_c < len(N_C_VALUES) and 0 <= self.idx_on < len(N_ON_VALUES)
                and 0 <= self.idx_in < len(N_IN_VALUES)):
            raise ValueError(f"action {self} outside the grid")

    @property
    def flat(self) -> int:
        return self.idx_c * _STRIDE_C + self.idx_on * _STRIDE_ON + self.idx_in

    @classmethod
    def from_flat(cls, i: int) -> "DrxAction":
        c, rest = divmod(int(i), _STRIDE_C)
        on, inn = divmod(rest, _STRIDE_ON)
        return cls(c, on, inn)

    @classmethod
    def of(cls, params: DrxParams) -> "DrxAction":
        c, on, inn, _ = params.indices
        return cls(c, on, inn)

    @property
    def t_c(self) -> int:
        return 256 * N_C_VALUES[self.idx_c]

    def to_params(self, n_so: int = 0) -> DrxParams:
        """Configuration for this action. On-durations that would reach the
        cycle length are clipped to the longest legal value."""
        on = self.idx_on
        while N_ON_VALUES[on] * PDCCH_PERIOD >= self.t_c:
            on -= 1
        return DrxParams(N_C_VALUES[self.idx_c], N_ON_VALUES[on], N_IN_VALUES[self.idx_in], n_so)


ACTIONS = tuple(DrxAction.from_flat(i) for i in range(N_ACTIONS))


def decision_state(records: Sequence[PacketRecord], mode: str = "counts") -> tuple[int, ...]:
    if mode == "counts":
        c = Counter(r.state_at_arrival for r in records)
        return tuple(c.get(i, 0) for i in range(4))
    if mode == "sequence":
        return tuple(int(r.state_at_arrival) for r in records)
    raise ValueError(f"unknown state mode {mode!r}")


@dataclass
class Hyper:
    alpha_lr: float = 0.1
    gamma: float = 0.9
    epsilon: float = 0.3
    epsilon_decay: float = 0.99
    epsilon_min: float = 0.05
    r_th: float = 0.1
    conv_window: int = 20
    eps_conv: float = 0.01
    explore_cap: int = 100

    def __post_init__(self):
        for name in ("alpha_lr", "gamma", "epsilon"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name}={v} outside (0, 1]")
        if not 0.0 <= self.epsilon_min <= self.epsilon:
            raise ValueError("epsilon_min must lie in [0, epsilon]")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError("epsilon_decay outside (0, 1]")
        if self.r_th < 0 or self.conv_window < 1 or self.explore_cap < 1:
            raise ValueError("r_th, conv_window and explore_cap must be positive")


class QTable:
    """Sparse action-value table plus the running mean of observed rewards.

    Rows are created on first write; reading an unseen state gives zeros.
    """

    def __init__(self, hyper: Hyper | None = None, n_actions: int = N_ACTIONS,
                 mode: Mode = Mode.EXPLORE):
        self.hyper = hyper or Hyper()
        self.n_actions = n_actions
        self.mode = mode
        self.q: dict[tuple, np.ndarray] = {}
        self.reward_sum: dict[tuple, float] = {}
        self.reward_n: dict[tuple, int] = {}

    def row(self, s) -> np.ndarray:
        r = self.q.get(s)
        return r if r is not None else np.zeros(self.n_actions)

    def value(self, s, a) -> float:
        r = self.q.get(s)
        return 0.0 if r is None else float(r[_flat(a)])

    def set_value(self, s, a, v: float) -> None:
        if s not in self.q:
            self.q[s] = np.zeros(self.n_actions)
        self.q[s][_flat(a)] = v

    def max_value(self, s) -> float:
        r = self.q.get(s)
        return 0.0 if r is None else float(r.max())

    def greedy(self, s, allowed: np.ndarray | None = None) -> int:
        row = self.row(s)
        if allowed is not None:
            idx = np.flatnonzero(allowed)
            return int(idx[np.argmax(row[idx])])
        return int(np.argmax(row))

    def observe_reward(self, s, a, r: float) -> None:
        for k in ((s, _flat(a)), (None, _flat(a))):
            self.reward_sum[k] = self.reward_sum.get(k, 0.0) + r
            self.reward_n[k] = self.reward_n.get(k, 0) + 1

    def expected_reward(self, s, a) -> float:
        """Mean reward seen for (s, a). Unseen pairs fall back to the mean over
        every state the action was tried in, then to ``(1 - gamma) * Q(s, a)``."""
        for k in ((s, _flat(a)), (None, _flat(a))):
            n = self.reward_n.get(k)
            if n:
                return self.reward_sum[k] / n
        return (1.0 - self.hyper.gamma) * self.value(s, a)

    def set_expected_reward(self, s, a, r: float) -> None:
        k = (s, _flat(a))
        self.reward_sum[k], self.reward_n[k] = float(r), 1

    # snapshot format: one "state<TAB>action<TAB>value" line per stored entry
    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write(f"# mode={self.mode.value} n_actions={self.n_actions}\n")
            for s in sorted(self.q):
                row = self.q[s]
                for i in np.flatnonzero(row):
                    fh.write(f"{','.join(map(str, s))}\t{i}\t{float(row[i])!r}\n")

    @classmethod
    def load(cls, path: str | Path, hyper: Hyper | None = None) -> "QTable":
        table = None
        with open(path) as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line.startswith("#"):
                    meta = dict(kv.split("=") for kv in line[1:].split())
                    table = cls(hyper, int(meta["n_actions"]), Mode(meta["mode"]))
                    continue
                if not line:
                    continue
                s, a, v = line.split("\t")
                if table is None:
                    table = cls(hyper)
                state = tuple(int(x) for x in s.split(",")) if s else ()
                table.set_value(state, int(a), float(v))
        return table or cls(hyper)


def _flat(a) -> int:
    return a.flat if isinstance(a, DrxAction) else int(a)


def q_update(table: QTable, s, a, r: float, s_next) -> float:
    """One Q-learning step on (s, a). Returns the change applied to Q(s, a)."""
    if table.mode is not Mode.EXPLORE:
        raise WrongMode("Q-table updates only happen in explore mode")
    h = table.hyper
    old = table.value(s, a)
    new = old + h.alpha_lr * (r + h.gamma * table.max_value(s_next) - old)
    table.set_value(s, a, new)
    table.observe_reward(s, a, r)
    return new - old


def select_action(table: QTable, s, rng: np.random.Generator, epsilon: float | None = None,
                  allowed: np.ndarray | None = None) -> DrxAction:
    """Epsilon-greedy choice; greedy ties go to the lowest index triple."""
    if table.mode is not Mode.EXPLORE:
        raise WrongMode("action selection happens in explore mode")
    eps = table.hyper.epsilon if epsilon is None else epsilon
    if rng.random() < eps:
        if allowed is None:
            return ACTIONS[int(rng.integers(table.n_actions))]
        idx = np.flatnonzero(allowed)
        return ACTIONS[int(idx[rng.integers(len(idx))])]
    return ACTIONS[table.greedy(s, allowed)]


def compute_start_offset(arrivals: Sequence[int], t_c_next: int) -> int:
    """Mean arrival phase within the next cycle, as a 0..255 offset index."""
    if len(arrivals) == 0:
        raise EmptyWindow("no arrivals to average")
    if t_c_next <= 0 or t_c_next % 256:
        raise ValueError(f"cycle {t_c_next} is not a multiple of 256 subframes")
    mean_phase = math.fsum((t % t_c_next) / t_c_next for t in arrivals) / len(arrivals)
    return int(round(256 * mean_phase)) % 256


def fading_check(table: QTable, s, a, r: float) -> Mode:
    """Switch to explore when the fresh reward falls more than ``r_th`` below
    what (s, a) has delivered so far."""
    if table.mode is not Mode.EXPLOIT:
        raise WrongMode("fading detection runs in exploit mode")
    if table.expected_reward(s, a) - r > table.hyper.r_th:
        table.mode = Mode.EXPLORE
    return table.mode


def maybe_exploit(table: QTable, deltas: Sequence[float], windows_explored: int) -> Mode:
    """Leave explore mode once the last ``conv_window`` Q changes are all small,
    or once ``explore_cap`` windows have been spent exploring."""
    if table.mode is not Mode.EXPLORE:
        return table.mode
    h = table.hyper
    recent = list(deltas)[-h.conv_window:]
    converged = len(recent) >= h.conv_window and max(abs(d) for d in recent) < h.eps_conv
    if converged or windows_explored >= h.explore_cap:
        table.mode = Mode.EXPLOIT
    return table.mode


def observe_window(records: Sequence[PacketRecord], metrics: WindowMetrics, n_d: int,
                   lam: float, t_max: float, state_mode: str = "counts") -> tuple[float, tuple]:
    if len(records) != n_d:
        raise WindowIncomplete(f"window holds {len(records)} of {n_d} packets")
    return ed_index(metrics.alpha, metrics.beta, lam, t_max), decision_state(records, state_mode)


@dataclass(frozen=True)
class DecisionOutcome:
    action: DrxAction
    n_so: int
    reconfigure: bool
    reward: float
    mode_after: Mode
    params: DrxParams
    state: tuple
    q_value: float


@dataclass
class ControllerConfig:
    n_d: int = 10
    lam: float = 0.5
    t_max: float = 300.0
    hyper: Hyper = field(default_factory=Hyper)
    state_mode: str = "counts"
    pin_inactivity: int | None = None  # fixed idx_in, or None to learn it
    enabled: bool = True

    def __post_init__(self):
        if isinstance(self.hyper, dict):
            self.hyper = Hyper(**self.hyper)
        if self.n_d < 1:
            raise ValueError("n_d must be at least 1")

    def as_dict(self) -> dict:
        return asdict(self)


class DrxController:
    """Decision loop for one UE stream, run at every window close."""

    def __init__(self, initial: DrxParams, config: ControllerConfig | None = None,
                 rng: np.random.Generator | None = None):
        self.config = config or ControllerConfig()
        self.table = QTable(self.config.hyper)
        self.rng = rng or np.random.Generator(np.random.PCG64(0))
        self.params = initial
        self.action = DrxAction.of(initial)
        self.state: tuple | None = None
        self.epsilon = self.config.hyper.epsilon
        self.windows_explored = 0
        self.deltas: deque = deque(maxlen=self.config.hyper.conv_window)
        self.allowed = None
        if self.config.pin_inactivity is not None:
            self.allowed = np.array([a.idx_in == self.config.pin_inactivity for a in ACTIONS])
        self.mode_switches: list[tuple[int, Mode]] = []
        self.window_index = 0

    @property
    def mode(self) -> Mode:
        return self.table.mode

    def _enter(self, mode: Mode):
        self.mode_switches.append((self.window_index, mode))
        if mode is Mode.EXPLORE:
            self.epsilon = self.config.hyper.epsilon
            self.windows_explored = 0
            self.deltas.clear()

    def decide(self, records: Sequence[PacketRecord], metrics: WindowMetrics) -> DecisionOutcome:
        cfg, h = self.config, self.config.hyper
        reward, s_new = observe_window(records, metrics, cfg.n_d, cfg.lam, cfg.t_max,
                                       cfg.state_mode)
        self.window_index += 1
        arrivals = [r.arrival for r in records]

        if self.table.mode is Mode.EXPLOIT:
            ref = self.state if self.state is not None else s_new
            q_ref = self.table.value(ref, self.action)
            if fading_check(self.table, ref, self.action, reward) is Mode.EXPLORE:
                self._enter(Mode.EXPLORE)
            else:
                self.table.observe_reward(ref, self.action, reward)
                self.state = s_new
                return DecisionOutcome(self.action, self.params.n_so, False, reward,
                                       Mode.EXPLOIT, self.params, s_new, q_ref)

        if self.state is not None:
            self.deltas.append(q_update(self.table, self.state, self.action, reward, s_new))
        self.state = s_new
        self.windows_explored += 1

        action = select_action(self.table, s_new, self.rng, self.epsilon, self.allowed)
        self.epsilon = max(h.epsilon_min, self.epsilon * h.epsilon_decay)
        if maybe_exploit(self.table, self.deltas, self.windows_explored) is Mode.EXPLOIT:
            action = ACTIONS[self.table.greedy(s_new, self.allowed)]
            self._enter(Mode.EXPLOIT)

        n_so = compute_start_offset(arrivals, action.t_c)
        params = action.to_params(n_so)
        reconfigure = params != self.params
        self.action, self.params = action, params
        return DecisionOutcome(action, n_so, reconfigure, reward, self.table.mode, params,
                               s_new, self.table.value(s_new, action))
