"""
Slicing benchmarks and the functional isolation check.

Timings are wall-clock and host dependent; only their ordering means
anything. Two tables are produced:

* ``attach``: time for one UE to establish a connection on a CP, UP or
  LTE-like slice while ``k`` slices run (the other ``k - 1`` attach and
  release their own UEs at the same moment).
* ``procedures``: five procedures of a UP slice, run plain or while another
  slice is added, modified or deleted. The registry starts with two slices.

Both tables interleave their conditions within each repetition so slow
drifts of the host hit every condition alike.
"""
from __future__ import annotations

import os
import statistics
import time
from dataclasses import dataclass, field
from itertools import count

from .drx import DrxParams
from .rrc import Procedure, RatFlavor, RrcState, UeContext
from .slicing import SliceRegistry, ThreadedSliceContext

FLAVORS = (RatFlavor.NbIotCpOpt, RatFlavor.NbIotUpOpt, RatFlavor.LteLike)
TABLE_PROCEDURES = (Procedure.Attach, Procedure.SecurityEstablish, Procedure.Reconfigure,
                    Procedure.Suspend, Procedure.Resume)
CONDITIONS = ("regular", "add", "modify", "delete")
PROC_LABEL = {
    Procedure.Attach: "RRC connection setup",
    Procedure.SecurityEstablish: "AS security establishment",
    Procedure.Reconfigure: "RRC connection reconfiguration",
    Procedure.Suspend: "RRC connection suspend",
    Procedure.Resume: "RRC connection resume",
}
BASE_DRX = DrxParams(1, 1, 0, 0)
ALT_DRX = DrxParams(2, 2, 1, 7)


@dataclass
class Cell:
    samples: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return statistics.fmean(self.samples)

    @property
    def std(self) -> float:
        return statistics.stdev(self.samples) if len(self.samples) > 1 else 0.0


@dataclass
class BenchTable:
    attach: dict[tuple[str, int], Cell] = field(default_factory=dict)
    procedures: dict[tuple[str, str], Cell] = field(default_factory=dict)

    def mean(self, table: str, row, col) -> float:
        return getattr(self, table)[row, col].mean


def thread_cap() -> int | None:
    """Upper bound on benchmark worker slices from ``CIOT_SIM_THREADS``."""
    raw = os.environ.get("CIOT_SIM_THREADS")
    if not raw:
        return None
    cap = int(raw)
    if cap < 1:
        raise ValueError("CIOT_SIM_THREADS must be a positive integer")
    return cap


def _prepare(ctx, ue_id: int, proc: Procedure) -> None:
    """Bring ``ue_id`` into the state ``proc`` starts from."""
    if proc is Procedure.Attach:
        return
    ctx.call(ctx.attach, ue_id)
    if proc is Procedure.Resume:
        ctx.call(ctx.run, ue_id, Procedure.Suspend)


def _cleanup(ctx, ue_id: int) -> None:
    def drop():
        ue = ctx.ues.get(ue_id)
        if ue is None:
            return
        if ue.rrc_state is RrcState.Suspended:
            ctx.run(ue_id, Procedure.Resume)
            ue = ctx.ues[ue_id]
        if ue.rrc_state is RrcState.Connected:
            ctx.run(ue_id, Procedure.Release)
        del ctx.ues[ue_id]
    ctx.call(drop)


def _job(ctx, ue_id: int, proc: Procedure):
    if proc is Procedure.Attach:
        return ctx.submit(ctx.attach, ue_id)
    if proc is Procedure.Reconfigure:
        return ctx.submit(ctx.run, ue_id, proc, ALT_DRX)
    return ctx.submit(ctx.run, ue_id, proc)


def _registry(threaded: bool = True) -> SliceRegistry:
    """Registry whose slice modifications hand a reconfiguration of each
    attached UE to that slice's own worker. The caller does not wait."""
    reg = SliceRegistry(threaded=threaded)

    def push(slice_id, ue_id, params):
        ctx = reg.context(slice_id)
        if isinstance(ctx, ThreadedSliceContext):
            ctx.submit(ctx.run, ue_id, Procedure.Reconfigure, params)
        else:
            ctx.run(ue_id, Procedure.Reconfigure, params)

    reg.on_reconfigure = push
    return reg


def _wait(reply):
    ok, value = reply.get()
    if not ok:
        raise value
    return value


def benchmark_attach(slice_counts, repetitions: int) -> dict[tuple[str, int], Cell]:
    cells: dict[tuple[str, int], Cell] = {}
    ue_ids = count(1)
    cap = thread_cap()
    for k in slice_counts:
        k_eff = min(k, cap) if cap else k
        regs, setups = [], []
        try:
            for rat in FLAVORS:
                cells[rat.name, k] = Cell()
                reg = SliceRegistry(threaded=True)
                regs.append(reg)
                ctx = reg.context(reg.add_slice(rat, BASE_DRX).id)
                bg_rats = [r for r in FLAVORS if r is not rat]
                others = [reg.context(reg.add_slice(bg_rats[i % 2], BASE_DRX).id)
                          for i in range(k_eff - 1)]
                setups.append((cells[rat.name, k], ctx, others))
            # flavours take turns within a repetition so host drift hits them alike
            for _ in range(repetitions):
                for cell, ctx, others in setups:
                    uid = next(ue_ids)
                    bg = [(o, next(ue_ids)) for o in others]
                    t0 = time.perf_counter()
                    replies = [_job(o, u, Procedure.Attach) for o, u in bg]
                    _wait(_job(ctx, uid, Procedure.Attach))
                    cell.samples.append((time.perf_counter() - t0) * 1e3)
                    for r in replies:
                        _wait(r)
                    _cleanup(ctx, uid)
                    for o, u in bg:
                        _cleanup(o, u)
        finally:
            for reg in regs:
                reg.close()
    return cells


def benchmark_procedures(repetitions: int) -> dict[tuple[str, str], Cell]:
    cells = {(PROC_LABEL[p], c): Cell() for p in TABLE_PROCEDURES for c in CONDITIONS}
    reg = _registry()
    ue_ids = count(1)
    try:
        target = reg.context(reg.add_slice(RatFlavor.NbIotUpOpt, BASE_DRX).id)
        other = reg.context(reg.add_slice(RatFlavor.LteLike, BASE_DRX).id)
        other.call(other.attach, 1_000_000)
        flip = [BASE_DRX, ALT_DRX]
        for rep in range(repetitions):
            for proc in TABLE_PROCEDURES:
                for cond in CONDITIONS:
                    uid = next(ue_ids)
                    _prepare(target, uid, proc)
                    victim = None
                    if cond == "delete":
                        victim = reg.add_slice(RatFlavor.LteLike, BASE_DRX).id
                    t0 = time.perf_counter()
                    reply = _job(target, uid, proc)
                    if cond == "add":
                        victim = reg.add_slice(RatFlavor.LteLike, BASE_DRX).id
                    elif cond == "modify":
                        reg.modify_slice(other.descriptor.id, default_drx=flip[rep % 2])
                    elif cond == "delete":
                        reg.delete_slice(victim)
                        victim = None
                    _wait(reply)
                    cells[PROC_LABEL[proc], cond].samples.append((time.perf_counter() - t0) * 1e3)
                    if victim is not None:
                        reg.delete_slice(victim)
                    _cleanup(target, uid)
    finally:
        reg.close()
    return cells


def benchmark_slicing(slice_counts=(1, 2, 3), repetitions: int = 100) -> BenchTable:
    """Both timing tables. ``repetitions`` below 30 is rejected."""
    if repetitions < 30:
        raise ValueError("benchmark needs at least 30 repetitions per cell")
    return BenchTable(benchmark_attach(list(slice_counts), repetitions),
                      benchmark_procedures(repetitions))


def benchmark_rows(table: BenchTable) -> list[tuple]:
    rows = []
    for (rat, k), c in table.attach.items():
        rows.append(("attach", rat, k, repr(c.mean), repr(c.std), len(c.samples)))
    for (proc, cond), c in table.procedures.items():
        rows.append(("procedures", proc, cond, repr(c.mean), repr(c.std), len(c.samples)))
    return rows


def format_table(table: BenchTable) -> str:
    """Plain-text rendering of both tables (mean ± std in ms)."""
    ks = sorted({k for _, k in table.attach})
    lines = ["attach time (ms) by slice count",
             "flavor       " + "".join(f"{k:>18d}" for k in ks)]
    for rat in FLAVORS:
        cells = [table.attach[rat.name, k] for k in ks]
        lines.append(f"{rat.name:<13s}" + "".join(f"{c.mean:>10.3f} ±{c.std:>6.3f}" for c in cells))
    lines += ["", "UP-slice procedure time (ms), two slices present",
              f"{'procedure':<32s}" + "".join(f"{c:>18s}" for c in CONDITIONS)]
    for proc in TABLE_PROCEDURES:
        cells = [table.procedures[PROC_LABEL[proc], c] for c in CONDITIONS]
        lines.append(f"{PROC_LABEL[proc]:<32s}"
                     + "".join(f"{c.mean:>10.3f} ±{c.std:>6.3f}" for c in cells))
    return "\n".join(lines)


# -- functional isolation --------------------------------------------------------

ISOLATION_SEQUENCE = (Procedure.Attach, Procedure.SecurityEstablish, Procedure.Reconfigure,
                      Procedure.Suspend, Procedure.Resume)


def isolation_transcript(during: Procedure | None = None, op: str | None = None,
                         threaded: bool = False, ue_id: int = 7) -> list[bytes]:
    """Frames of a UP slice walking one UE through the five procedures.

    With ``during`` and ``op`` set, another slice is added, modified or
    deleted after the first message of that procedure. Deterministic mode
    interleaves message by message; threaded mode fires the command from the
    caller's thread while the slice worker runs the procedure.
    """
    reg = _registry(threaded)
    try:
        target = reg.context(reg.add_slice(RatFlavor.NbIotUpOpt, BASE_DRX).id)
        other = reg.context(reg.add_slice(RatFlavor.LteLike, BASE_DRX).id)
        other.call(other.attach, 99)

        def perturb():
            if op == "add":
                reg.add_slice(RatFlavor.NbIotCpOpt, ALT_DRX)
            elif op == "modify":
                reg.modify_slice(other.descriptor.id, default_drx=ALT_DRX)
            elif op == "delete":
                reg.delete_slice(other.descriptor.id)
            else:
                raise ValueError(f"unknown operation {op!r}")

        for proc in ISOLATION_SEQUENCE:
            fire = proc is during and op is not None
            if proc is Procedure.Attach:
                target.ues[ue_id] = UeContext(ue_id, target.descriptor.id, BASE_DRX)
            new = ALT_DRX if proc is Procedure.Reconfigure else None
            if threaded and isinstance(target, ThreadedSliceContext):
                reply = target.submit(target.run, ue_id, proc, new)
                if fire:
                    perturb()
                _wait(reply)
            else:
                gen = target.iter_run(ue_id, proc, new)
                next(gen)
                if fire:
                    perturb()
                for _ in gen:
                    pass
        return target.frames()
    finally:
        reg.close()
