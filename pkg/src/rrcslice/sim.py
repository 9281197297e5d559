"""
Discrete-event harness.

Events carry integer subframe times. Ties at one time resolve by kind
(reconfiguration delivery, packet arrival, window close, slice command,
end of run) and then by insertion order, so a reconfiguration that lands on
an on-duration start already governs packets arriving in that subframe.

Per UE the harness keeps a :class:`~rrcslice.drx.DrxMachine`, a window of
packet records and a :class:`~rrcslice.qlearn.DrxController`. After the
N_d-th arrival of a window the controller decides; a changed configuration
becomes an RRC reconfiguration delivered at the first on-duration start
strictly after the close.
"""
from __future__ import annotations

import csv
import enum
import heapq
import io
import itertools
import json
import logging
import math
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .drx import (DrxMachine, DrxParams, Phase, PacketRecord, PowerProfile, WindowMetrics,
                  ed_index, energy, mean_delay)
from .errors import RrcSliceError
from .qlearn import (ACTIONS, ControllerConfig, DecisionOutcome, DrxAction, DrxController,
                     Mode, compute_start_offset)
from .rrc import Procedure, reconfigure_drx, store_packet_record
from .scenario import Scenario
from .slicing import SliceCommand, SliceRegistry, TranscriptEntry, encode_command
from .traffic import generate_trace

log = logging.getLogger(__name__)


class Ev(enum.IntEnum):
    """Event kinds; the value is the tie-break priority."""
    ReconfigDelivery = 0
    PacketArrival = 1
    WindowClose = 2
    SliceCommandDue = 3
    SimEnd = 4


class EventQueue:
    """Min-heap keyed by (time, kind, insertion order)."""

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()
        self.now = 0

    def push(self, t: int, kind: Ev, payload: Any = None) -> None:
        if t < self.now:
            raise ValueError(f"event at {t} scheduled in the past (now={self.now})")
        heapq.heappush(self._heap, (int(t), int(kind), next(self._seq), payload))

    def pop(self) -> tuple[int, Ev, Any]:
        t, k, _, payload = heapq.heappop(self._heap)
        self.now = t
        return t, Ev(k), payload

    def __len__(self):
        return len(self._heap)


# -- per-UE window bookkeeping -----------------------------------------------------

class WindowTracker:
    """Owns one DRX machine and cuts its packet stream into decision windows.

    A window spans ``[previous close, this close)`` in subframes. ``T_offset``
    is the length of the sleep stretch the window opens in (zero if it opens
    outside S3) and ``N_c`` counts on-duration starts seen in DRX mode.
    """

    def __init__(self, params: DrxParams, n_d: int, lam: float, t_max: float,
                 service_rate: int = 1000, power: PowerProfile | None = None, start: int = 0):
        self.machine = DrxMachine(params, service_rate, cursor=start)
        self.n_d, self.lam, self.t_max = n_d, lam, t_max
        self.power = power or PowerProfile()
        self.records: list[PacketRecord] = []
        self.start = start
        self.dwell0 = (0, 0, 0, 0)
        self.starts0 = 0
        self.sleep_end0 = self.machine.sleep_run_end(start)
        self.index = 0
        self.pending: tuple[int, DrxParams] | None = None

    def arrive(self, t: int, size: int) -> bool:
        """Feed one packet; True when it completes the window."""
        self.apply_due(t)
        self.records.append(self.machine.arrive(t, size))
        return len(self.records) >= self.n_d

    def apply_due(self, t: int) -> None:
        if self.pending is not None and self.pending[0] <= t:
            due, params = self.pending
            self.pending = None
            self.machine.set_params(due, params)

    def close(self, t: int) -> tuple[WindowMetrics, list[PacketRecord], float]:
        m = self.machine
        m.advance_to(t)
        dwell_now = m.snapshot()
        dwell = tuple(a - b for a, b in zip(dwell_now, self.dwell0))
        t_d = t - self.start
        # a window closing in the subframe it opened spans no time: count it as awake
        alpha = dwell[Phase.S3] / t_d if t_d > 0 else 0.0
        t_off = 0 if self.sleep_end0 is None else min(self.sleep_end0, t) - self.start
        n_cycles = m.on_starts_in_drx - self.starts0
        records = self.records
        beta = mean_delay(records)
        f = ed_index(alpha, beta, self.lam, self.t_max)
        metrics = WindowMetrics(t_d, t_off, n_cycles, alpha, beta, f, dwell)
        e = energy(dwell, self.power)
        self.records = []
        self.start, self.dwell0, self.starts0 = t, dwell_now, m.on_starts_in_drx
        self.sleep_end0 = m.sleep_run_end(t)
        self.index += 1
        return metrics, records, e

    def schedule(self, t: int, params: DrxParams) -> int | None:
        """Queue ``params`` for the first on-duration start after ``t``; a newer
        request replaces an undelivered one. Returns the delivery time."""
        if params == self.machine.params:
            self.pending = None
            return None
        due = self.machine.params.next_on_start(t + 1)
        self.pending = (due, params)
        return due


# -- oracle ------------------------------------------------------------------------

def replay_with_action(trace: Sequence[tuple[int, int]], action: DrxAction | int,
                       config: ControllerConfig | None = None, service_rate: int = 1000) -> float:
    """Mean per-window ED index of ``trace`` under a fixed action.

    Only the start offset moves: after every window it is recomputed from the
    window's arrivals and delivered at the next on-duration start, exactly as
    the controller would. A trailing partial window is ignored; a trace with
    fewer than N_d packets gives NaN.
    """
    cfg = config or ControllerConfig()
    if not isinstance(action, DrxAction):
        action = ACTIONS[int(action)]
    tr = WindowTracker(action.to_params(0), cfg.n_d, cfg.lam, cfg.t_max, service_rate)
    total, n = 0.0, 0
    for t, size in trace:
        if tr.arrive(t, size):
            metrics, records, _ = tr.close(t)
            total += metrics.f_ed
            n += 1
            n_so = compute_start_offset([r.arrival for r in records], action.t_c)
            tr.schedule(t, action.to_params(n_so))
    return total / n if n else math.nan


def oracle_sweep(trace: Sequence[tuple[int, int]], config: ControllerConfig | None = None,
                 service_rate: int = 1000, actions: Iterable[DrxAction] = ACTIONS) -> np.ndarray:
    """``replay_with_action`` for every action, indexed by flat action id."""
    acts = list(actions)
    out = np.full(len(ACTIONS), np.nan)
    for a in acts:
        out[a.flat] = replay_with_action(trace, a, config, service_rate)
    return out


# -- reports -----------------------------------------------------------------------

METRICS_HEADER = ("ue_id", "window_index", "t_close", "T_d", "T_offset", "N_c", "alpha",
                  "beta", "f_ed", "n_c", "n_on", "n_in", "n_so", "energy_mJ",
                  "t_s0", "t_s1", "t_s2", "t_s3")
DECISIONS_HEADER = ("ue_id", "window_index", "t_close", "mode", "state_counts", "idx_c",
                    "idx_on", "idx_in", "n_so", "reward", "q_value", "reconfigured",
                    "effective_at")
TRANSCRIPT_HEADER = ("time", "slice_id", "ue_id", "procedure", "seq", "frame_hex")
BENCHMARK_HEADER = ("table", "row", "column", "mean_ms", "std_ms", "n")


@dataclass(frozen=True)
class WindowRow:
    ue_id: int
    index: int
    t_close: int
    metrics: WindowMetrics
    params: DrxParams
    energy_mj: float

    def csv(self) -> tuple:
        m, p = self.metrics, self.params
        return (self.ue_id, self.index, self.t_close, m.t_d, m.t_offset, m.n_cycles,
                repr(m.alpha), repr(m.beta), repr(m.f_ed), p.n_c, p.n_on, p.n_in, p.n_so,
                repr(self.energy_mj), *m.dwell)


@dataclass(frozen=True)
class DecisionRow:
    ue_id: int
    index: int
    t_close: int
    outcome: DecisionOutcome
    effective_at: int | None

    def csv(self) -> tuple:
        o = self.outcome
        return (self.ue_id, self.index, self.t_close, o.mode_after.value,
                " ".join(map(str, o.state)), o.action.idx_c, o.action.idx_on, o.action.idx_in,
                o.n_so, repr(o.reward), repr(o.q_value), int(o.reconfigure),
                "" if self.effective_at is None else self.effective_at)


@dataclass
class RunReport:
    scenario: Scenario
    windows: list[WindowRow] = field(default_factory=list)
    decisions: list[DecisionRow] = field(default_factory=list)
    transcript: list[TranscriptEntry] = field(default_factory=list)
    benchmark: list[tuple] = field(default_factory=list)
    final_modes: dict[int, Mode] = field(default_factory=dict)
    final_params: dict[int, DrxParams] = field(default_factory=dict)
    mode_switches: dict[int, list[tuple[int, Mode]]] = field(default_factory=dict)
    generated: dict[int, int] = field(default_factory=dict)
    delivered: dict[int, int] = field(default_factory=dict)
    pending: dict[int, int] = field(default_factory=dict)
    command_responses: list[tuple[int, bytes]] = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def n_windows(self) -> int:
        return len(self.windows)

    def mean_f_ed(self) -> float:
        if not self.windows:
            return math.nan
        return math.fsum(w.metrics.f_ed for w in self.windows) / len(self.windows)

    def conserved(self) -> bool:
        return all(self.generated[u] == self.delivered[u] + self.pending[u] for u in self.generated)

    def csv_text(self) -> dict[str, str]:
        out = {}
        for name, header, rows in (
                ("metrics.csv", METRICS_HEADER, (w.csv() for w in self.windows)),
                ("decisions.csv", DECISIONS_HEADER, (d.csv() for d in self.decisions)),
                ("transcripts.csv", TRANSCRIPT_HEADER,
                 ((e.time, e.slice_id, e.ue_id, e.procedure, e.seq, e.frame.hex())
                  for e in self.transcript)),
                ("benchmark.csv", BENCHMARK_HEADER, self.benchmark)):
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
            out[name] = buf.getvalue()
        return out

    def summary(self) -> str:
        lines = [f"windows simulated : {self.n_windows}",
                 f"mean f_ED         : {self.mean_f_ed():.4f}"]
        for ue in sorted(self.final_modes):
            p = self.final_params[ue]
            a = DrxAction.of(p)
            lines.append(f"ue {ue:<5d} final mode {self.final_modes[ue].value:<7s} action "
                         f"({a.idx_c},{a.idx_on},{a.idx_in}) = n_c {p.n_c}, n_on {p.n_on}, "
                         f"n_in {p.n_in}, n_so {p.n_so}")
        if not self.final_modes:
            lines.append("no controlled UEs")
        lines.append(f"packets conserved : {self.conserved()}")
        lines.append(f"wall time         : {self.wall_seconds:.2f} s")
        return "\n".join(lines)


# -- the run -----------------------------------------------------------------------

def controller_rng(seed: int, ue_id: int) -> np.random.Generator:
    # separate from the traffic stream of the same UE
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, ue_id, 1])))


class _Simulation:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.report = RunReport(sc)
        self.q = EventQueue()
        self.registry = SliceRegistry(threaded=(sc.mode == "bench"),
                                      on_reconfigure=self._on_modify)
        self.trackers: dict[int, WindowTracker] = {}
        self.controllers: dict[int, DrxController] = {}
        self.slice_of: dict[int, int] = {}
        self.now = 0

    # slice helpers
    def _ctx(self, ue_id):
        sid = self.slice_of.get(ue_id)
        if sid is None or sid not in self.registry:
            return None
        return self.registry.context(sid)

    def _request(self, ue_id: int, params: DrxParams, t: int) -> int | None:
        """Route a DRX change through RRC; returns the delivery time if any."""
        ctx = self._ctx(ue_id)
        if ctx is None:
            return None
        ue = ctx.ues[ue_id]
        ue = ctx.call(reconfigure_drx, ue, params, t)
        ctx.ues[ue_id] = ue
        due = self.trackers[ue_id].schedule(t, params)
        if due is not None:
            self.q.push(due, Ev.ReconfigDelivery, (ue_id, due, params))
        return due

    def _on_modify(self, slice_id: int, ue_id: int, params: DrxParams) -> None:
        if ue_id in self.trackers:
            self._request(ue_id, params, self.now)
            if ue_id in self.controllers:
                self.controllers[ue_id].params = params
                self.controllers[ue_id].action = DrxAction.of(params)

    def setup(self) -> None:
        sc = self.sc
        sids = [self.registry.add_slice(s.rat, s.drx).id for s in sc.slices]
        cfg = sc.controller
        for spec in sc.ues:
            sid = sids[spec.slice]
            ctx = self.registry.context(sid)
            ue = ctx.call(ctx.attach, spec.ue_id, None, 0)
            self.slice_of[spec.ue_id] = sid
            self.trackers[spec.ue_id] = WindowTracker(ue.drx, cfg.n_d, cfg.lam, cfg.t_max,
                                                      sc.service_rate, sc.power)
            if cfg.enabled:
                self.controllers[spec.ue_id] = DrxController(ue.drx, cfg,
                                                             controller_rng(sc.seed, spec.ue_id))
            trace = generate_trace(spec.schedule, sc.duration, sc.seed, spec.ue_id)
            self.report.generated[spec.ue_id] = 0
            for t, size in trace:
                self.q.push(t, Ev.PacketArrival, (spec.ue_id, size))
        for cmd in sc.commands:
            self.q.push(cmd.at, Ev.SliceCommandDue, cmd)
        self.q.push(sc.duration, Ev.SimEnd)

    def handle(self, t: int, kind: Ev, payload) -> bool:
        self.now = t
        if kind is Ev.PacketArrival:
            ue_id, size = payload
            if self._ctx(ue_id) is None:
                return True  # slice gone: the UE no longer receives traffic
            tr = self.trackers[ue_id]
            self.report.generated[ue_id] += 1
            full = tr.arrive(t, size)
            store_packet_record(self._ctx(ue_id).ues[ue_id], tr.records[-1])
            if full:
                # closes before any later arrival, even one in the same subframe
                self.handle(t, Ev.WindowClose, ue_id)
        elif kind is Ev.WindowClose:
            self._close(t, payload)
        elif kind is Ev.ReconfigDelivery:
            ue_id, due, params = payload
            ctx = self._ctx(ue_id)
            tr = self.trackers[ue_id]
            if ctx is None or tr.pending != (due, params):
                return True  # superseded or slice deleted
            ctx.call(ctx.run, ue_id, Procedure.Reconfigure, params, t)
            tr.apply_due(t)
        elif kind is Ev.SliceCommandDue:
            cmd = SliceCommand(payload.op, payload.slice_id, payload.rat, payload.drx,
                               payload.ue_id)
            resp = self.registry.dispatch_command(encode_command(cmd), t)
            self.report.command_responses.append((t, resp))
        elif kind is Ev.SimEnd:
            return False
        return True

    def _close(self, t: int, ue_id: int) -> None:
        tr = self.trackers[ue_id]
        params = tr.machine.params
        metrics, records, e = tr.close(t)
        rep = self.report
        rep.windows.append(WindowRow(ue_id, tr.index - 1, t, metrics, params, e))
        ctrl = self.controllers.get(ue_id)
        if ctrl is None or self._ctx(ue_id) is None:
            return
        before = ctrl.mode
        out = ctrl.decide(records, metrics)
        if ctrl.mode is not before:
            log.info("ue %d window %d: %s -> %s", ue_id, tr.index - 1, before.value,
                     ctrl.mode.value)
        due = self._request(ue_id, out.params, t) if out.reconfigure else None
        rep.decisions.append(DecisionRow(ue_id, tr.index - 1, t, out, due))

    def finish(self) -> None:
        sc, rep = self.sc, self.report
        for ue_id, tr in self.trackers.items():
            if self._ctx(ue_id) is not None:
                tr.apply_due(sc.duration)
                tr.machine.advance_to(sc.duration)
            rep.pending[ue_id] = len(tr.machine.pending)
            rep.delivered[ue_id] = rep.generated[ue_id] - len(tr.machine.pending)
            ctrl = self.controllers.get(ue_id)
            if ctrl is not None:
                rep.final_modes[ue_id] = ctrl.mode
                rep.final_params[ue_id] = tr.pending[1] if tr.pending else tr.machine.params
                rep.mode_switches[ue_id] = list(ctrl.mode_switches)
        contexts = [self.registry.context(s) for s in self.registry.ids()]
        contexts += list(self.registry.removed.values())
        entries = [e for c in contexts for e in c.transcript]
        # slices log independently; merge by time, slice, then per-slice order
        order = {id(e): i for c in contexts for i, e in enumerate(c.transcript)}
        entries.sort(key=lambda e: (e.time, e.slice_id, order[id(e)]))
        rep.transcript = entries
        self.registry.close()


def run(scenario: Scenario, out_dir: str | Path | None = None) -> RunReport:
    """Simulate ``scenario`` to its duration. With ``out_dir`` the report is
    also written there (see :func:`write_report`)."""
    started = time.perf_counter()
    if out_dir is not None:
        begin_report(out_dir, scenario)
    sim = _Simulation(scenario)
    try:
        sim.setup()
        while True:
            t, kind, payload = sim.q.pop()
            if not sim.handle(t, kind, payload):
                break
        sim.finish()
    except BaseException:
        sim.registry.close()
        raise
    rep = sim.report
    if scenario.mode == "bench":
        from .bench import benchmark_slicing, benchmark_rows
        table = benchmark_slicing(list(scenario.bench.slice_counts), scenario.bench.repetitions)
        rep.benchmark = benchmark_rows(table)
    rep.wall_seconds = time.perf_counter() - started
    if out_dir is not None:
        write_report(rep, out_dir)
    return rep


# -- output files --------------------------------------------------------------------

def _meta(scenario: Scenario, status: str, extra: dict | None = None) -> dict:
    meta = {"status": status, "seed": scenario.seed, "mode": scenario.mode,
            "python": platform.python_version(), "numpy": np.__version__,
            "scenario": scenario.to_dict()}
    if extra:
        meta.update(extra)
    return meta


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".part")
    tmp.write_text(text)
    os.replace(tmp, path)


def begin_report(out_dir: str | Path, scenario: Scenario) -> Path:
    """Create ``out_dir`` and record the run as started before any work."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "run_meta.json", json.dumps(_meta(scenario, "running"), indent=2) + "\n")
    return out


def write_report(rep: RunReport, out_dir: str | Path) -> Path:
    """Write the four CSVs, each via rename, then mark run_meta complete."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in rep.csv_text().items():
        _atomic_write(out / name, text)
    extra = {
        "windows": rep.n_windows,
        "mean_f_ed": rep.mean_f_ed() if rep.windows else None,
        "final": {str(u): {"mode": rep.final_modes[u].value,
                           "drx": list(rep.final_params[u].indices)} for u in rep.final_modes},
        "conserved": rep.conserved(),
        "wall_seconds": rep.wall_seconds,
    }
    _atomic_write(out / "run_meta.json",
                  json.dumps(_meta(rep.scenario, "complete", extra), indent=2) + "\n")
    return out
