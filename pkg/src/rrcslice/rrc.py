"""
Per-slice RRC procedure engine: message codec, connection state machine and
the UE context store.

Messages use a fixed binary framing instead of ASN.1/UPER::

    slice_id u16 BE | logical_channel u8 | msg_type u8 | length u16 BE | payload

Payloads are TLV lists (tag u8, length u8, value), the same layout the
southbound protocol uses for DRX parameters.
"""
from __future__ import annotations

import enum
import struct
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterator

from .drx import DrxParams, PacketRecord
from .errors import (DecodeError, IllegalProcedure, InvalidDrxParams,
                     PayloadTooLarge, UnsupportedByRat)

HEADER = struct.Struct(">HBBH")
MAX_PAYLOAD = 0xFFFF - HEADER.size

TAG_RAT = 0x01
TAG_DRX = 0x02
TAG_UE_ID = 0x03
TAG_NAS = 0x10


class RatFlavor(enum.IntEnum):
    NbIotCpOpt = 1
    NbIotUpOpt = 2
    LteLike = 3


class LogicalChannel(enum.IntEnum):
    CCCH = 0
    DCCH = 1
    BCCH = 2
    PCCH = 3


class MsgType(enum.IntEnum):
    ConnRequest = 1
    ConnSetup = 2
    ConnSetupComplete = 3
    SecurityModeCommand = 4
    SecurityModeComplete = 5
    ConnReconfiguration = 6
    ConnReconfigurationComplete = 7
    ConnSuspend = 8
    ConnResumeRequest = 9
    ConnResume = 10
    ConnResumeComplete = 11
    ConnRelease = 12
    Paging = 13
    SystemInfo = 14


CHANNEL_OF = {
    MsgType.ConnRequest: LogicalChannel.CCCH,
    MsgType.ConnSetup: LogicalChannel.CCCH,
    MsgType.ConnSetupComplete: LogicalChannel.DCCH,
    MsgType.SecurityModeCommand: LogicalChannel.DCCH,
    MsgType.SecurityModeComplete: LogicalChannel.DCCH,
    MsgType.ConnReconfiguration: LogicalChannel.DCCH,
    MsgType.ConnReconfigurationComplete: LogicalChannel.DCCH,
    MsgType.ConnSuspend: LogicalChannel.DCCH,
    MsgType.ConnResumeRequest: LogicalChannel.CCCH,
    MsgType.ConnResume: LogicalChannel.DCCH,
    MsgType.ConnResumeComplete: LogicalChannel.DCCH,
    MsgType.ConnRelease: LogicalChannel.DCCH,
    MsgType.Paging: LogicalChannel.PCCH,
    MsgType.SystemInfo: LogicalChannel.BCCH,
}


@dataclass(frozen=True)
class RrcMessage:
    slice_id: int
    logical_channel: LogicalChannel
    msg_type: MsgType
    payload: bytes = b""

    def __post_init__(self):
        if not 0 <= self.slice_id <= 0xFFFF:
            raise ValueError(f"slice_id {self.slice_id} does not fit in u16")
        if CHANNEL_OF[self.msg_type] != self.logical_channel:
            raise ValueError(
                f"{self.msg_type.name} is not carried on {self.logical_channel.name}")

    @classmethod
    def make(cls, slice_id: int, msg_type: MsgType, payload: bytes = b"") -> "RrcMessage":
        return cls(slice_id, CHANNEL_OF[msg_type], msg_type, payload)

    @property
    def pdu_name(self) -> str:
        return f"{self.logical_channel.name}_{self.msg_type.name}_RRC_PDU"


def encode_message(m: RrcMessage) -> bytes:
    if len(m.payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(m.payload)} bytes exceeds {MAX_PAYLOAD}")
    return HEADER.pack(m.slice_id, m.logical_channel, m.msg_type, len(m.payload)) + bytes(m.payload)


def decode_message(raw: bytes) -> RrcMessage:
    """Inverse of :func:`encode_message`; any malformed input raises DecodeError."""
    raw = bytes(raw)
    if len(raw) < HEADER.size:
        raise DecodeError(f"frame of {len(raw)} bytes is shorter than the header")
    slice_id, ch, mt, length = HEADER.unpack_from(raw)
    if len(raw) - HEADER.size != length:
        raise DecodeError(f"length field {length} disagrees with {len(raw) - HEADER.size} payload bytes")
    try:
        channel, msg_type = LogicalChannel(ch), MsgType(mt)
    except ValueError as exc:
        raise DecodeError(str(exc)) from None
    if CHANNEL_OF[msg_type] != channel:
        raise DecodeError(f"{msg_type.name} is not carried on {channel.name}")
    return RrcMessage(slice_id, channel, msg_type, raw[HEADER.size:])


# -- TLV helpers shared with the southbound protocol --------------------------

def encode_tlv(tag: int, value: bytes) -> bytes:
    if len(value) > 0xFF:
        raise ValueError("TLV value too long")
    return bytes((tag, len(value))) + value


def iter_tlv(payload: bytes) -> Iterator[tuple[int, bytes]]:
    i = 0
    while i < len(payload):
        if i + 2 > len(payload):
            raise DecodeError("truncated TLV header")
        tag, n = payload[i], payload[i + 1]
        if i + 2 + n > len(payload):
            raise DecodeError(f"TLV 0x{tag:02x} overruns payload")
        yield tag, payload[i + 2:i + 2 + n]
        i += 2 + n


def drx_to_bytes(p: DrxParams) -> bytes:
    return bytes(p.indices)


def drx_from_bytes(b: bytes) -> DrxParams:
    if len(b) != 4:
        raise DecodeError("DRX TLV must carry 4 bytes")
    return DrxParams.from_indices(*b)


# -- UE contexts ----------------------------------------------------------------

class RrcState(enum.Enum):
    Idle = "idle"
    Connected = "connected"
    Suspended = "suspended"


class Bearer(enum.Enum):
    SRB0 = "SRB0"
    SRB1 = "SRB1"
    SRB1bis = "SRB1bis"
    DRB = "DRB"


class Procedure(enum.Enum):
    Attach = "attach"
    SecurityEstablish = "security"
    Reconfigure = "reconfigure"
    Suspend = "suspend"
    Resume = "resume"
    Release = "release"


HISTORY_CAPACITY = 1024


@dataclass
class UeContext:
    ue_id: int
    slice_id: int
    drx: DrxParams
    rrc_state: RrcState = RrcState.Idle
    bearers: frozenset = frozenset({Bearer.SRB0})
    security_active: bool = False
    traffic_history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_CAPACITY))
    config_history: list = field(default_factory=list)
    suspended_bearers: frozenset = frozenset()
    pending_drx: tuple[int, DrxParams] | None = None

    def __post_init__(self):
        if not 0 <= self.ue_id <= 0xFFFFFFFF:
            raise ValueError("ue_id must fit in u32")


def store_packet_record(ue: UeContext, rec: PacketRecord) -> UeContext:
    """Append to the bounded traffic history; the oldest record drops at capacity."""
    ue.traffic_history.append(rec)
    return ue


# -- procedures -------------------------------------------------------------------

# (state, procedure) -> next state
TRANSITIONS = {
    (RrcState.Idle, Procedure.Attach): RrcState.Connected,
    (RrcState.Connected, Procedure.SecurityEstablish): RrcState.Connected,
    (RrcState.Connected, Procedure.Reconfigure): RrcState.Connected,
    (RrcState.Connected, Procedure.Suspend): RrcState.Suspended,
    (RrcState.Suspended, Procedure.Resume): RrcState.Connected,
    (RrcState.Connected, Procedure.Release): RrcState.Idle,
}

UNSUPPORTED = {
    RatFlavor.NbIotCpOpt: {Procedure.Suspend, Procedure.Resume, Procedure.SecurityEstablish},
    RatFlavor.NbIotUpOpt: set(),
    RatFlavor.LteLike: {Procedure.Suspend, Procedure.Resume},
}


def nas_payload(ue_id: int) -> bytes:
    # stand-in for the piggybacked NAS PDU carrying user data
    return b"NAS-DATA" + ue_id.to_bytes(4, "big")


def _messages(rat: RatFlavor, sid: int, ue: UeContext, proc: Procedure,
              new_drx: DrxParams | None) -> list[RrcMessage]:
    M = RrcMessage.make
    uid = encode_tlv(TAG_UE_ID, ue.ue_id.to_bytes(4, "big"))
    if proc is Procedure.Attach:
        head = [M(sid, MsgType.ConnRequest, uid),
                M(sid, MsgType.ConnSetup, encode_tlv(TAG_DRX, drx_to_bytes(ue.drx)))]
        if rat is RatFlavor.NbIotCpOpt:
            return head + [M(sid, MsgType.ConnSetupComplete, encode_tlv(TAG_NAS, nas_payload(ue.ue_id)))]
        return head + [M(sid, MsgType.ConnSetupComplete),
                       M(sid, MsgType.SecurityModeCommand),
                       M(sid, MsgType.SecurityModeComplete),
                       M(sid, MsgType.ConnReconfiguration, encode_tlv(TAG_DRX, drx_to_bytes(ue.drx))),
                       M(sid, MsgType.ConnReconfigurationComplete)]
    if proc is Procedure.SecurityEstablish:
        return [M(sid, MsgType.SecurityModeCommand), M(sid, MsgType.SecurityModeComplete)]
    if proc is Procedure.Reconfigure:
        drx = new_drx or ue.drx
        return [M(sid, MsgType.ConnReconfiguration, encode_tlv(TAG_DRX, drx_to_bytes(drx))),
                M(sid, MsgType.ConnReconfigurationComplete)]
    if proc is Procedure.Suspend:
        return [M(sid, MsgType.ConnSuspend)]
    if proc is Procedure.Resume:
        return [M(sid, MsgType.ConnResumeRequest, uid), M(sid, MsgType.ConnResume),
                M(sid, MsgType.ConnResumeComplete)]
    if proc is Procedure.Release:
        return [M(sid, MsgType.ConnRelease)]
    raise IllegalProcedure(f"unknown procedure {proc!r}")


def check_procedure(rat: RatFlavor, ue: UeContext, proc: Procedure) -> RrcState:
    if proc in UNSUPPORTED[rat]:
        raise UnsupportedByRat(f"{proc.value} is not available on {rat.name} slices")
    try:
        return TRANSITIONS[ue.rrc_state, proc]
    except KeyError:
        raise IllegalProcedure(f"{proc.value} not allowed in state {ue.rrc_state.value}") from None


def iter_procedure(slice_desc, ue: UeContext, proc: Procedure,
                   new_drx: DrxParams | None = None, now: int = 0):
    """Yield the procedure's messages one at a time; the generator's return
    value is the updated context. Lets callers interleave other work between
    messages."""
    rat = RatFlavor(slice_desc.rat)
    target = check_procedure(rat, ue, proc)
    for m in _messages(rat, slice_desc.id, ue, proc, new_drx):
        yield m

    changes: dict = {"rrc_state": target}
    if proc is Procedure.Attach:
        if rat is RatFlavor.NbIotCpOpt:
            changes["bearers"] = frozenset({Bearer.SRB0, Bearer.SRB1bis})
        else:
            changes["bearers"] = frozenset({Bearer.SRB0, Bearer.SRB1, Bearer.DRB})
            changes["security_active"] = True
    elif proc is Procedure.SecurityEstablish:
        changes["security_active"] = True
    elif proc is Procedure.Reconfigure and new_drx is not None:
        changes["drx"] = new_drx
        changes["pending_drx"] = None
        changes["config_history"] = ue.config_history + [(now, new_drx)]
    elif proc is Procedure.Suspend:
        changes["suspended_bearers"] = ue.bearers
        changes["bearers"] = frozenset({Bearer.SRB0})
    elif proc is Procedure.Resume:
        changes["bearers"] = ue.suspended_bearers
        changes["suspended_bearers"] = frozenset()
    elif proc is Procedure.Release:
        changes["bearers"] = frozenset({Bearer.SRB0})
        changes["security_active"] = False
        changes["pending_drx"] = None
    return replace(ue, **changes)


def run_procedure(slice_desc, ue: UeContext, proc: Procedure,
                  new_drx: DrxParams | None = None,
                  now: int = 0) -> tuple[UeContext, list[RrcMessage]]:
    gen = iter_procedure(slice_desc, ue, proc, new_drx, now)
    transcript = []
    while True:
        try:
            transcript.append(next(gen))
        except StopIteration as stop:
            return stop.value, transcript


def reconfigure_drx(ue: UeContext, new: DrxParams, now: int) -> UeContext:
    """Schedule ``new`` for delivery at the UE's next on-duration start.

    The old parameters keep governing the UE until
    :func:`deliver_reconfiguration` runs at that time.
    """
    if not isinstance(new, DrxParams):
        raise InvalidDrxParams(f"expected DrxParams, got {type(new).__name__}")
    if new == ue.drx:
        return replace(ue, pending_drx=None) if ue.pending_drx else ue
    if ue.rrc_state is RrcState.Idle:
        raise IllegalProcedure("UE is idle; attach before reconfiguring")
    return replace(ue, pending_drx=(ue.drx.next_on_start(now), new))


def deliver_reconfiguration(slice_desc, ue: UeContext, now: int) -> tuple[UeContext, list[RrcMessage]]:
    if ue.pending_drx is None:
        return ue, []
    due, new = ue.pending_drx
    if now < due:
        raise IllegalProcedure(f"reconfiguration due at {due}, not {now}")
    return run_procedure(slice_desc, ue, Procedure.Reconfigure, new, now)
