"""
Slices, the southbound protocol and isolation
=============================================

Create slices with southbound command frames, run RRC procedures on them and
check that changing one slice leaves another slice's messages untouched.
Finish with a small timing table.
"""
from rrcslice import DrxParams, SliceRegistry
from rrcslice.bench import benchmark_slicing, format_table, isolation_transcript
from rrcslice.rrc import Procedure, RatFlavor, decode_message
from rrcslice.slicing import Op, SliceCommand, decode_response, encode_command

reg = SliceRegistry()

# %%
# An Add frame: magic, version, op, slice id (0 for add), payload length and
# a TLV carrying the RAT flavour.
frame = encode_command(SliceCommand(Op.Add, rat=RatFlavor.NbIotCpOpt))
print("add frame:", frame.hex(" "))
for rat in RatFlavor:
    resp = decode_response(reg.dispatch_command(encode_command(SliceCommand(Op.Add, rat=rat))))
    print(f"  {rat.name:<11s} -> {resp.status.name} slice {resp.slice_id}")

# %%
# Garbage gets a NACK and the registry stays as it was.
print("garbage:", decode_response(reg.dispatch_command(b"\xc1\x07\x01\x09")).status.name,
      "slices:", reg.ids())

# %%
# Attach one UE per slice. The CP-optimised slice piggybacks data on the
# setup and needs fewer messages than the UP slice.
for sid in reg.ids():
    ctx = reg.context(sid)
    ctx.attach(100 + sid)
    names = [decode_message(f).msg_type.name for f in ctx.frames()]
    print(f"slice {sid} ({ctx.descriptor.rat.name}): {len(names)} messages {names}")

# %%
# Suspend and resume on the UP slice, then delete the LTE-like slice, which
# releases its UE before the context goes away.
up = reg.context(2)
up.run(102, Procedure.Suspend)
up.run(102, Procedure.Resume)
reg.delete_slice(3)
print("after delete:", reg.ids(), "released:", reg.removed[3].transcript[-1].procedure)

# %%
# Isolation: the UP slice's transcript with a neighbour added, modified or
# deleted in the middle of every procedure, in both execution modes.
base = isolation_transcript()
same = all(isolation_transcript(p, op, threaded=th) == base
           for p in (Procedure.Attach, Procedure.Resume)
           for op in ("add", "modify", "delete") for th in (False, True))
print("transcripts identical:", same)

# %%
# Wall-clock timings are host dependent; only their ordering is of interest.
print(format_table(benchmark_slicing([1, 2, 3], 50)))
