"""
Slice lifecycle (add / modify / delete) and the southbound command protocol.

Each slice owns a :class:`SliceContext` holding its UE contexts and its
message transcript. Contexts never share mutable state. In deterministic mode
a context executes procedures inline on the caller's thread. In benchmark
mode it owns a worker thread, and every message hop travels through a queue
to a per-slice lower-layer echo thread.

Southbound frames::

    request:  C1 07 | version=1 | op u8 | slice_id u16 BE | len u16 BE | TLVs
    response: C1 07 | version=1 | status u8 | slice_id u16 BE | len u16 BE | TLVs

Request TLVs are ``0x01`` rat (u8), ``0x02`` drx (idx_c, idx_on, idx_in, n_so)
and ``0x03`` ue_id (u32). Each TLV is ``tag u8 | length u8 | value``.
"""
from __future__ import annotations

import enum
import queue
import struct
import threading
from dataclasses import dataclass, field, replace
from typing import Callable

from .drx import DrxParams
from .errors import (CapacityExceeded, DecodeError, IllegalProcedure, InvalidDrxParams,
                     MalformedCommand, RrcSliceError, UnknownSlice, UnknownUe,
                     UnsupportedByRat)
from .rrc import (TAG_DRX, TAG_RAT, TAG_UE_ID, Procedure, RatFlavor, RrcMessage,
                  RrcState, UeContext, decode_message, drx_from_bytes, drx_to_bytes,
                  encode_message, encode_tlv, iter_procedure, iter_tlv)

MAGIC = b"\xC1\x07"
VERSION = 1
FRAME = struct.Struct(">2sBBHH")
DEFAULT_CAPACITY = 16
MAX_SLICE_ID = 0xFFFF


class SliceState(enum.Enum):
    Initializing = "initializing"
    Running = "running"
    Deleting = "deleting"


class Op(enum.IntEnum):
    Add = 1
    Modify = 2
    Delete = 3


class Status(enum.IntEnum):
    ACK = 0
    MalformedCommand = 1
    CapacityExceeded = 2
    InvalidDrxParams = 3
    UnknownSlice = 4
    UnknownUe = 5
    IllegalProcedure = 6


_STATUS_OF = [
    (MalformedCommand, Status.MalformedCommand),
    (CapacityExceeded, Status.CapacityExceeded),
    (InvalidDrxParams, Status.InvalidDrxParams),
    (UnknownSlice, Status.UnknownSlice),
    (UnknownUe, Status.UnknownUe),
    (IllegalProcedure, Status.IllegalProcedure),
    (UnsupportedByRat, Status.IllegalProcedure),
]


@dataclass(frozen=True)
class SliceDescriptor:
    id: int
    rat: RatFlavor
    default_drx: DrxParams
    created_at: int = 0
    state: SliceState = SliceState.Running


@dataclass(frozen=True)
class SliceCommand:
    op: Op
    target: int | None = None
    rat: RatFlavor | None = None
    drx: DrxParams | None = None
    ue_id: int | None = None

    def __post_init__(self):
        if self.op is Op.Add and self.target not in (None, 0):
            raise MalformedCommand("Add must not name a target slice")
        if self.op is not Op.Add and not self.target:
            raise MalformedCommand(f"{self.op.name} needs a target slice")


@dataclass(frozen=True)
class TranscriptEntry:
    time: int
    slice_id: int
    ue_id: int
    procedure: str
    seq: int
    frame: bytes

    @property
    def message(self) -> RrcMessage:
        return decode_message(self.frame)


# -- southbound codec -----------------------------------------------------------------

def encode_command(cmd: SliceCommand) -> bytes:
    payload = b""
    if cmd.rat is not None:
        payload += encode_tlv(TAG_RAT, bytes((int(cmd.rat),)))
    if cmd.drx is not None:
        payload += encode_tlv(TAG_DRX, drx_to_bytes(cmd.drx))
    if cmd.ue_id is not None:
        payload += encode_tlv(TAG_UE_ID, cmd.ue_id.to_bytes(4, "big"))
    return FRAME.pack(MAGIC, VERSION, int(cmd.op), cmd.target or 0, len(payload)) + payload


def decode_command(raw: bytes) -> SliceCommand:
    """Parse a request frame. Bad framing raises MalformedCommand; a DRX TLV
    that is well-formed but outside the parameter domain raises
    InvalidDrxParams."""
    raw = bytes(raw)
    if len(raw) < FRAME.size:
        raise MalformedCommand(f"frame of {len(raw)} bytes is shorter than the header")
    magic, version, op, slice_id, length = FRAME.unpack_from(raw)
    if magic != MAGIC:
        raise MalformedCommand("bad magic")
    if version != VERSION:
        raise MalformedCommand(f"unsupported version {version}")
    if len(raw) - FRAME.size != length:
        raise MalformedCommand("payload length mismatch")
    try:
        op = Op(op)
    except ValueError:
        raise MalformedCommand(f"unknown op {op}") from None
    fields: dict = {}
    drx_raw = None
    try:
        for tag, value in iter_tlv(raw[FRAME.size:]):
            if tag in fields or (tag == TAG_DRX and drx_raw is not None):
                raise MalformedCommand(f"duplicate TLV 0x{tag:02x}")
            if tag == TAG_RAT:
                if len(value) != 1:
                    raise MalformedCommand("rat TLV must be 1 byte")
                try:
                    fields[tag] = RatFlavor(value[0])
                except ValueError:
                    raise MalformedCommand(f"unknown rat {value[0]}") from None
            elif tag == TAG_DRX:
                if len(value) != 4:
                    raise MalformedCommand("drx TLV must be 4 bytes")
                drx_raw = value
            elif tag == TAG_UE_ID:
                if len(value) != 4:
                    raise MalformedCommand("ue_id TLV must be 4 bytes")
                fields[tag] = int.from_bytes(value, "big")
            else:
                raise MalformedCommand(f"unknown TLV tag 0x{tag:02x}")
    except DecodeError as exc:
        raise MalformedCommand(str(exc)) from None
    cmd = SliceCommand(op, slice_id or None, fields.get(TAG_RAT), None, fields.get(TAG_UE_ID))
    if drx_raw is not None:
        cmd = replace(cmd, drx=drx_from_bytes(drx_raw))
    return cmd


def encode_response(status: Status, slice_id: int, payload: bytes = b"") -> bytes:
    return FRAME.pack(MAGIC, VERSION, int(status), slice_id, len(payload)) + payload


@dataclass(frozen=True)
class Response:
    status: Status
    slice_id: int
    rat: RatFlavor | None = None
    drx: DrxParams | None = None

    @property
    def ok(self) -> bool:
        return self.status is Status.ACK


def decode_response(raw: bytes) -> Response:
    raw = bytes(raw)
    if len(raw) < FRAME.size:
        raise DecodeError("response shorter than header")
    magic, version, status, slice_id, length = FRAME.unpack_from(raw)
    if magic != MAGIC or version != VERSION or len(raw) - FRAME.size != length:
        raise DecodeError("bad response frame")
    rat = drx = None
    for tag, value in iter_tlv(raw[FRAME.size:]):
        if tag == TAG_RAT:
            rat = RatFlavor(value[0])
        elif tag == TAG_DRX:
            drx = drx_from_bytes(value)
    return Response(Status(status), slice_id, rat, drx)


def _descriptor_payload(d: SliceDescriptor) -> bytes:
    return encode_tlv(TAG_RAT, bytes((int(d.rat),))) + encode_tlv(TAG_DRX, drx_to_bytes(d.default_drx))


# -- slice execution contexts ----------------------------------------------------------

class SliceContext:
    """Isolated per-slice state: UE contexts plus the ordered message log."""

    def __init__(self, descriptor: SliceDescriptor):
        self.descriptor = descriptor
        self.ues: dict[int, UeContext] = {}
        self.transcript: list[TranscriptEntry] = []

    # procedures ---------------------------------------------------------------
    def _record(self, now, ue_id, proc, seq, msg):
        self.transcript.append(TranscriptEntry(now, self.descriptor.id, ue_id, proc.value, seq,
                                               self._transfer(encode_message(msg))))

    def _transfer(self, frame: bytes) -> bytes:
        # hand the PDU to the lower layers and read back what they saw
        return decode_and_check(frame)

    def iter_run(self, ue_id: int, proc: Procedure, new_drx=None, now: int = 0):
        """Generator form of :meth:`run`: yields after every message."""
        try:
            ue = self.ues[ue_id]
        except KeyError:
            raise UnknownUe(f"ue {ue_id} is not attached to slice {self.descriptor.id}") from None
        gen = iter_procedure(self.descriptor, ue, proc, new_drx, now)
        seq = 0
        while True:
            try:
                msg = next(gen)
            except StopIteration as stop:
                self.ues[ue_id] = stop.value
                return stop.value
            self._record(now, ue_id, proc, seq, msg)
            seq += 1
            yield msg

    def run(self, ue_id: int, proc: Procedure, new_drx=None, now: int = 0) -> UeContext:
        gen = self.iter_run(ue_id, proc, new_drx, now)
        while True:
            try:
                next(gen)
            except StopIteration as stop:
                return stop.value

    def attach(self, ue_id: int, drx: DrxParams | None = None, now: int = 0) -> UeContext:
        if ue_id in self.ues:
            raise IllegalProcedure(f"ue {ue_id} already attached")
        self.ues[ue_id] = UeContext(ue_id, self.descriptor.id, drx or self.descriptor.default_drx)
        return self.run(ue_id, Procedure.Attach, now=now)

    def detach_all(self, now: int = 0) -> None:
        for ue_id in sorted(self.ues):
            ue = self.ues[ue_id]
            if ue.rrc_state is RrcState.Suspended:
                self.run(ue_id, Procedure.Resume, now=now)
                ue = self.ues[ue_id]
            if ue.rrc_state is RrcState.Connected:
                self.run(ue_id, Procedure.Release, now=now)
        self.ues.clear()

    def frames(self, ue_id: int | None = None) -> list[bytes]:
        return [e.frame for e in self.transcript if ue_id is None or e.ue_id == ue_id]

    # lifecycle hooks used by the threaded subclass
    def start(self) -> None:
        pass

    def stop(self) -> None:
        pass

    def call(self, fn: Callable, *args, **kw):
        return fn(*args, **kw)


def decode_and_check(frame: bytes) -> bytes:
    decode_message(frame)
    return frame


class ThreadedSliceContext(SliceContext):
    """Benchmark-mode context: a worker thread runs the slice's procedures and
    a lower-layer thread receives every PDU through a queue."""

    def __init__(self, descriptor: SliceDescriptor):
        super().__init__(descriptor)
        self._jobs: queue.Queue = queue.Queue()
        self._down: queue.Queue = queue.Queue()
        self._up: queue.Queue = queue.Queue()
        self._worker = threading.Thread(target=self._serve, name=f"slice-{descriptor.id}",
                                         daemon=True)
        self._lower = threading.Thread(target=self._lower_layer, name=f"lower-{descriptor.id}",
                                        daemon=True)

    def start(self) -> None:
        self._lower.start()
        self._worker.start()

    def stop(self) -> None:
        self._jobs.put(None)
        self._worker.join()
        self._down.put(None)
        self._lower.join()

    def _serve(self):
        while True:
            job = self._jobs.get()
            if job is None:
                return
            fn, args, kw, reply = job
            try:
                reply.put((True, fn(*args, **kw)))
            except BaseException as exc:  # handed back to the caller
                reply.put((False, exc))

    def _lower_layer(self):
        while True:
            frame = self._down.get()
            if frame is None:
                return
            try:
                self._up.put(decode_and_check(frame))
            except DecodeError as exc:
                self._up.put(exc)

    def _transfer(self, frame: bytes) -> bytes:
        self._down.put(frame)
        got = self._up.get()
        if isinstance(got, Exception):
            raise got
        return got

    def submit(self, fn: Callable, *args, **kw) -> queue.Queue:
        reply: queue.Queue = queue.Queue(maxsize=1)
        self._jobs.put((fn, args, kw, reply))
        return reply

    def call(self, fn: Callable, *args, **kw):
        ok, value = self.submit(fn, *args, **kw).get()
        if not ok:
            raise value
        return value


# -- registry -------------------------------------------------------------------------

ReconfigHook = Callable[[int, int, DrxParams], None]


class SliceRegistry:
    """Owns every slice context of one base station.

    Mutations go through a single lock so commands are serialised. The
    optional ``on_reconfigure(slice_id, ue_id, params)`` hook receives DRX
    changes that must reach UEs at their next on-duration; the simulator
    plugs its scheduler in here.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY, threaded: bool = False,
                 on_reconfigure: ReconfigHook | None = None):
        if not 1 <= capacity <= MAX_SLICE_ID:
            raise ValueError("capacity out of range")
        self.capacity = capacity
        self.threaded = threaded
        self.on_reconfigure = on_reconfigure
        self._next_id = 1
        self._slices: dict[int, SliceContext] = {}
        self._lock = threading.RLock()
        self.assigned_ids: list[int] = []
        self.removed: dict[int, SliceContext] = {}

    def __len__(self):
        return len(self._slices)

    def __contains__(self, slice_id):
        return slice_id in self._slices

    def ids(self) -> list[int]:
        return sorted(self._slices)

    def context(self, slice_id: int) -> SliceContext:
        try:
            return self._slices[slice_id]
        except KeyError:
            raise UnknownSlice(f"no slice with id {slice_id}") from None

    def get(self, slice_id: int) -> SliceDescriptor:
        return self.context(slice_id).descriptor

    def add_slice(self, rat: RatFlavor, default_drx: DrxParams, now: int = 0) -> SliceDescriptor:
        rat = RatFlavor(rat)
        if not isinstance(default_drx, DrxParams):
            raise InvalidDrxParams("default_drx must be DrxParams")
        with self._lock:
            if len(self._slices) >= self.capacity:
                raise CapacityExceeded(f"registry already holds {self.capacity} slices")
            if self._next_id > MAX_SLICE_ID:
                raise CapacityExceeded("slice identifier space exhausted")
            sid = self._next_id
            self._next_id += 1
            desc = SliceDescriptor(sid, rat, default_drx, now, SliceState.Initializing)
            ctx = (ThreadedSliceContext if self.threaded else SliceContext)(desc)
            ctx.start()
            ctx.descriptor = replace(desc, state=SliceState.Running)
            self._slices[sid] = ctx
            self.assigned_ids.append(sid)
            return ctx.descriptor

    def modify_slice(self, slice_id: int, rat: RatFlavor | None = None,
                     default_drx: DrxParams | None = None, ue_id: int | None = None,
                     drx: DrxParams | None = None) -> SliceDescriptor:
        """Change the named fields only.

        ``drx`` with ``ue_id`` overrides one UE; ``default_drx`` (or ``drx``
        without a UE) replaces the slice default and reaches every attached UE
        through the reconfiguration hook.
        """
        with self._lock:
            if not slice_id:
                raise UnknownSlice("slice 0 is the reserved 'no slice' id")
            ctx = self.context(slice_id)
            if ctx.descriptor.state is not SliceState.Running:
                raise UnknownSlice(f"slice {slice_id} is being deleted")
            if ue_id is not None:
                if drx is None:
                    raise MalformedCommand("per-UE modify needs DRX parameters")
                if ue_id not in ctx.ues:
                    raise UnknownUe(f"ue {ue_id} is not attached to slice {slice_id}")
                if self.on_reconfigure:
                    self.on_reconfigure(slice_id, ue_id, drx)
                return ctx.descriptor
            if drx is not None and default_drx is None:
                default_drx = drx
            changes = {}
            if rat is not None:
                changes["rat"] = RatFlavor(rat)
            if default_drx is not None:
                changes["default_drx"] = default_drx
            ctx.descriptor = replace(ctx.descriptor, **changes)
            if default_drx is not None and self.on_reconfigure:
                for uid in sorted(ctx.ues):
                    self.on_reconfigure(slice_id, uid, default_drx)
            return ctx.descriptor

    def delete_slice(self, slice_id: int, now: int = 0) -> None:
        """Drain the slice: its worker finishes queued work, attached UEs are
        released, then the context disappears."""
        with self._lock:
            if not slice_id:
                raise UnknownSlice("slice 0 is the reserved 'no slice' id")
            ctx = self.context(slice_id)
            ctx.descriptor = replace(ctx.descriptor, state=SliceState.Deleting)
            ctx.call(ctx.detach_all, now)
            ctx.stop()
            del self._slices[slice_id]
            self.removed[slice_id] = ctx

    def apply(self, cmd: SliceCommand, now: int = 0) -> SliceDescriptor | None:
        if cmd.op is Op.Add:
            if cmd.rat is None:
                raise MalformedCommand("Add needs a rat TLV")
            if cmd.ue_id is not None:
                raise MalformedCommand("Add cannot carry a ue_id")
            return self.add_slice(cmd.rat, cmd.drx or DEFAULT_SLICE_DRX, now)
        if cmd.op is Op.Modify:
            return self.modify_slice(cmd.target, rat=cmd.rat, ue_id=cmd.ue_id, drx=cmd.drx)
        self.delete_slice(cmd.target, now)
        return None

    def dispatch_command(self, raw: bytes, now: int = 0) -> bytes:
        """Decode, apply and answer one southbound frame. Always returns exactly
        one response frame; a rejected command leaves the registry untouched."""
        raw = bytes(raw)
        echo = int.from_bytes(raw[4:6], "big") if len(raw) >= 6 else 0
        try:
            cmd = decode_command(raw)
            desc = self.apply(cmd, now)
        except RrcSliceError as exc:
            for kind, status in _STATUS_OF:
                if isinstance(exc, kind):
                    return encode_response(status, echo)
            return encode_response(Status.MalformedCommand, echo)
        if desc is None:
            return encode_response(Status.ACK, cmd.target or 0)
        return encode_response(Status.ACK, desc.id, _descriptor_payload(desc))

    def close(self) -> None:
        for sid in list(self._slices):
            self._slices[sid].stop()


DEFAULT_SLICE_DRX = DrxParams(n_c=1, n_on=1, n_in=0, n_so=0)
