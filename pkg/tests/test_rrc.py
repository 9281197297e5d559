import itertools

import pytest
from hypothesis import given, settings, strategies as st

from rrcslice.drx import DrxParams, PacketRecord
from rrcslice.errors import (DecodeError, IllegalProcedure, InvalidDrxParams,
                             PayloadTooLarge, UnsupportedByRat)
from rrcslice.rrc import (CHANNEL_OF, HISTORY_CAPACITY, TRANSITIONS, Bearer, MsgType,
                          Procedure, RatFlavor, RrcMessage, RrcState, UeContext,
                          decode_message, deliver_reconfiguration, encode_message,
                          reconfigure_drx, run_procedure, store_packet_record)
from rrcslice.slicing import SliceDescriptor, SliceState

T = MsgType

messages = st.builds(
    lambda sid, mt, payload: RrcMessage.make(sid, mt, payload),
    st.integers(0, 0xFFFF), st.sampled_from(list(MsgType)), st.binary(max_size=300))


def desc(rat, sid=1):
    return SliceDescriptor(sid, rat, DrxParams(1, 1, 0), 0, SliceState.Running)


def ue_in(state, rat=RatFlavor.NbIotUpOpt):
    ue = UeContext(42, 1, DrxParams(1, 1, 0))
    if state is RrcState.Idle:
        return ue
    ue, _ = run_procedure(desc(rat), ue, Procedure.Attach)
    if state is RrcState.Suspended:
        ue, _ = run_procedure(desc(rat), ue, Procedure.Suspend)
    return ue


# -- codec ---------------------------------------------------------------------

def test_empty_conn_request_is_header_only():
    # the listed header fields add up to 6 bytes (u16+u8+u8+u16)
    raw = encode_message(RrcMessage.make(1, T.ConnRequest))
    assert raw == bytes([0, 1, 0, 1, 0, 0])


@settings(max_examples=1000)
@given(messages)
def test_round_trip(m):
    assert decode_message(encode_message(m)) == m


def test_oversized_payload():
    with pytest.raises(PayloadTooLarge):
        encode_message(RrcMessage.make(1, T.SystemInfo, bytes(70_000)))


@given(st.binary(max_size=64))
def test_decoding_garbage_is_total(raw):
    try:
        m = decode_message(raw)
    except DecodeError:
        return
    assert encode_message(m) == raw


@pytest.mark.parametrize("raw", [b"", b"\x00\x01\x00", bytes([0, 1, 0, 1, 0, 3, 1]),
                                 bytes([0, 1, 9, 1, 0, 0]), bytes([0, 1, 0, 99, 0, 0]),
                                 bytes([0, 1, 1, 1, 0, 0])])
def test_bad_frames(raw):
    with pytest.raises(DecodeError):
        decode_message(raw)


def test_channel_legality():
    assert CHANNEL_OF[T.Paging].name == "PCCH"
    with pytest.raises(ValueError):
        RrcMessage(1, CHANNEL_OF[T.SystemInfo], T.ConnRequest)
    assert RrcMessage.make(3, T.ConnSetup).pdu_name == "CCCH_ConnSetup_RRC_PDU"


# -- procedures ------------------------------------------------------------------

def test_cp_attach_is_three_messages():
    ue, tr = run_procedure(desc(RatFlavor.NbIotCpOpt), ue_in(RrcState.Idle), Procedure.Attach)
    assert [m.msg_type for m in tr] == [T.ConnRequest, T.ConnSetup, T.ConnSetupComplete]
    assert ue.rrc_state is RrcState.Connected
    assert not ue.security_active
    assert b"NAS" in tr[-1].payload


def test_up_attach_is_seven_messages():
    ue, tr = run_procedure(desc(RatFlavor.NbIotUpOpt), ue_in(RrcState.Idle), Procedure.Attach)
    assert [m.msg_type for m in tr] == [
        T.ConnRequest, T.ConnSetup, T.ConnSetupComplete, T.SecurityModeCommand,
        T.SecurityModeComplete, T.ConnReconfiguration, T.ConnReconfigurationComplete]
    assert ue.security_active and Bearer.DRB in ue.bearers


def test_cp_shorter_than_up_for_any_ue():
    for uid in (0, 1, 2**32 - 1):
        ue = UeContext(uid, 1, DrxParams(1, 1, 0))
        cp = run_procedure(desc(RatFlavor.NbIotCpOpt), ue, Procedure.Attach)[1]
        up = run_procedure(desc(RatFlavor.NbIotUpOpt), ue, Procedure.Attach)[1]
        assert len(cp) < len(up)


def test_procedure_lengths():
    d = desc(RatFlavor.NbIotUpOpt)
    ue = ue_in(RrcState.Connected)
    assert len(run_procedure(d, ue, Procedure.SecurityEstablish)[1]) == 2
    assert len(run_procedure(d, ue, Procedure.Reconfigure, DrxParams(2, 1, 0))[1]) == 2
    sus, tr = run_procedure(d, ue, Procedure.Suspend)
    assert len(tr) == 1 and sus.bearers == {Bearer.SRB0}
    back, tr = run_procedure(d, sus, Procedure.Resume)
    assert len(tr) == 3 and back.bearers == ue.bearers


def test_resume_from_idle_is_illegal():
    with pytest.raises(IllegalProcedure):
        run_procedure(desc(RatFlavor.NbIotUpOpt), ue_in(RrcState.Idle), Procedure.Resume)


@pytest.mark.parametrize("rat", [RatFlavor.NbIotCpOpt, RatFlavor.LteLike])
def test_suspend_only_on_up_slices(rat):
    with pytest.raises(UnsupportedByRat):
        run_procedure(desc(rat), ue_in(RrcState.Connected, rat), Procedure.Suspend)


@pytest.mark.parametrize("state,proc", list(itertools.product(RrcState, Procedure)))
def test_transition_table_is_exhaustive(state, proc):
    ue = ue_in(state)
    d = desc(RatFlavor.NbIotUpOpt)
    if (state, proc) in TRANSITIONS:
        new, _ = run_procedure(d, ue, proc)
        assert new.rrc_state is TRANSITIONS[state, proc]
        if new.rrc_state is RrcState.Idle:
            assert new.bearers <= {Bearer.SRB0}
    else:
        with pytest.raises(IllegalProcedure):
            run_procedure(d, ue, proc)


def test_failed_procedure_leaves_context_alone():
    ue = ue_in(RrcState.Idle)
    before = (ue.rrc_state, ue.bearers, ue.security_active)
    with pytest.raises(IllegalProcedure):
        run_procedure(desc(RatFlavor.NbIotUpOpt), ue, Procedure.Suspend)
    assert (ue.rrc_state, ue.bearers, ue.security_active) == before


# -- reconfiguration ---------------------------------------------------------------

def test_same_params_schedule_nothing():
    ue = ue_in(RrcState.Connected)
    assert reconfigure_drx(ue, ue.drx, 100) is ue


def test_new_cycle_waits_for_on_duration():
    ue = ue_in(RrcState.Connected)            # cycle 256 from subframe 0
    new = DrxParams(4, 1, 0)
    ue2 = reconfigure_drx(ue, new, 100)
    assert ue2.pending_drx == (256, new)
    assert ue2.drx == ue.drx                 # old parameters still govern
    with pytest.raises(IllegalProcedure):
        deliver_reconfiguration(desc(RatFlavor.NbIotUpOpt), ue2, 200)
    ue3, tr = deliver_reconfiguration(desc(RatFlavor.NbIotUpOpt), ue2, 256)
    assert ue3.drx == new and ue3.pending_drx is None
    assert ue3.config_history == [(256, new)]
    assert [m.msg_type for m in tr] == [T.ConnReconfiguration, T.ConnReconfigurationComplete]


def test_reconfigure_rejects_bad_params():
    with pytest.raises(InvalidDrxParams):
        DrxParams(1, 5, 0)                  # 5 is not an on-duration multiplier
    with pytest.raises(InvalidDrxParams):
        reconfigure_drx(ue_in(RrcState.Connected), (1, 1, 0, 0), 0)


# -- history ----------------------------------------------------------------------------

def test_history_is_bounded_fifo():
    ue = ue_in(RrcState.Idle)
    store_packet_record(ue, PacketRecord(0, 1, 0, 3))
    assert len(ue.traffic_history) == 1
    for t in range(1, HISTORY_CAPACITY + 5):
        store_packet_record(ue, PacketRecord(t, 1, t, 3))
    assert len(ue.traffic_history) == HISTORY_CAPACITY
    arrivals = [r.arrival for r in ue.traffic_history]
    assert arrivals[0] == 5 and arrivals == sorted(arrivals)
